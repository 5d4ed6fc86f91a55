//! Synthetic particle image velocimetry benchmark toolkit.
//!
//! The pipeline runs flow field -> scaled field -> particle image sequence ->
//! condition matrix with manifest, and scores flow predictions with the
//! endpoint error (EPE) and normalized endpoint error (NEPE). A classical
//! FFT cross-correlation estimator is bundled as a baseline so the whole
//! generate/estimate/score loop can be checked without a learned model.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod datasetgen;
pub mod flowfield;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod particles;
pub mod scale;
pub mod xcorr;

pub use flowfield::{BlasiusProfile, FieldError, VelocityField};
pub use particles::{Particle, ParticleEnsemble, ParticleImage};

/// Version string recorded in dataset manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
