//! Image corruptions for training-time augmentation: additive noise,
//! rectangular occlusion and Gaussian glare. Ground-truth flow is never
//! touched here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::particles::ParticleImage;

const NOISE_STREAM: u64 = 1;
const OCCLUSION_STREAM: u64 = 2;
const GLARE_STREAM: u64 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("invalid augmentation parameter: {0}")]
    Parameter(String),
}

/// Concrete corruption parameters for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub noise_sigma: f64,
    pub occlusion_count: usize,
    pub occlusion_size_range: (usize, usize),
    pub glare_count: usize,
    pub glare_sigma_range: (f64, f64),
    pub glare_amplitude_range: (f64, f64),
    pub rng_seed: u64,
}

impl AugmentSpec {
    /// All corruptions at zero strength.
    pub fn none(rng_seed: u64) -> Self {
        Self {
            noise_sigma: 0.0,
            occlusion_count: 0,
            occlusion_size_range: (8, 32),
            glare_count: 0,
            glare_sigma_range: (5.0, 20.0),
            glare_amplitude_range: (0.3, 0.8),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let err = |m: &str| Err(AugmentError::Parameter(m.to_owned()));
        if !(0.0..=0.1).contains(&self.noise_sigma) {
            return err("noise_sigma must lie in [0, 0.1]");
        }
        let (o_lo, o_hi) = self.occlusion_size_range;
        if o_lo > o_hi {
            return err("occlusion_size_range has min > max");
        }
        let (s_lo, s_hi) = self.glare_sigma_range;
        if !(0.0 <= s_lo && s_lo <= s_hi) {
            return err("glare_sigma_range must be nonnegative with min <= max");
        }
        let (a_lo, a_hi) = self.glare_amplitude_range;
        if !(0.0 <= a_lo && a_lo <= a_hi && a_hi <= 1.0) {
            return err("glare_amplitude_range must satisfy 0 <= min <= max <= 1");
        }
        Ok(())
    }
}

/// Ranges from which per-image [`AugmentSpec`]s are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentRanges {
    pub noise_sigma_max: f64,
    pub occlusion_count_max: usize,
    pub occlusion_size_range: (usize, usize),
    pub glare_count_max: usize,
    pub glare_sigma_range: (f64, f64),
    pub glare_amplitude_range: (f64, f64),
    /// Draw a fresh spec for every frame instead of sharing one per sequence.
    pub independent_frames: bool,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            noise_sigma_max: 0.03,
            occlusion_count_max: 3,
            occlusion_size_range: (8, 32),
            glare_count_max: 2,
            glare_sigma_range: (5.0, 20.0),
            glare_amplitude_range: (0.3, 0.8),
            independent_frames: true,
        }
    }
}

impl AugmentRanges {
    pub fn sample(&self, seed: u64) -> AugmentSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AugmentSpec {
            noise_sigma: rng.random_range(0.0..=self.noise_sigma_max),
            occlusion_count: rng.random_range(0..=self.occlusion_count_max),
            occlusion_size_range: self.occlusion_size_range,
            glare_count: rng.random_range(0..=self.glare_count_max),
            glare_sigma_range: self.glare_sigma_range,
            glare_amplitude_range: self.glare_amplitude_range,
            rng_seed: rng.random(),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-pixel zero-mean Gaussian noise, then clamp to `[0, 1]`.
pub fn add_noise(image: &ParticleImage, sigma: f64, seed: u64) -> Result<ParticleImage, AugmentError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(AugmentError::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| AugmentError::Parameter(e.to_string()))?;
    let mut rng = stream_rng(seed, NOISE_STREAM);
    let mut out = image.clone();
    for p in &mut out.intensity {
        *p += normal.sample(&mut rng);
    }
    out.clamp_unit();
    Ok(out)
}

/// Zeroes `occlusion_count` axis-aligned rectangles placed fully inside the
/// image. Returns the image and the occlusion mask.
pub fn add_occlusion(image: &ParticleImage, spec: &AugmentSpec) -> (ParticleImage, Vec<bool>) {
    let (w, h) = (image.width, image.height);
    let mut mask = vec![false; w * h];
    let mut out = image.clone();
    if spec.occlusion_count == 0 || w == 0 || h == 0 {
        return (out, mask);
    }
    let mut rng = stream_rng(spec.rng_seed, OCCLUSION_STREAM);
    let (lo, hi) = spec.occlusion_size_range;
    for _ in 0..spec.occlusion_count {
        let rw = rng.random_range(lo..=hi).clamp(1, w);
        let rh = rng.random_range(lo..=hi).clamp(1, h);
        let x0 = rng.random_range(0..=w - rw);
        let y0 = rng.random_range(0..=h - rh);
        for j in y0..y0 + rh {
            for i in x0..x0 + rw {
                mask[j * w + i] = true;
                out.intensity[j * w + i] = 0.0;
            }
        }
    }
    (out, mask)
}

/// Adds isotropic Gaussian blobs `A exp(-r^2 / (2 sigma^2))`, then clamps.
pub fn add_glare(image: &ParticleImage, spec: &AugmentSpec) -> ParticleImage {
    let mut out = image.clone();
    if spec.glare_count == 0 {
        return out;
    }
    let mut rng = stream_rng(spec.rng_seed, GLARE_STREAM);
    let (w, h) = (image.width, image.height);
    for _ in 0..spec.glare_count {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let sigma = rng.random_range(spec.glare_sigma_range.0..=spec.glare_sigma_range.1);
        let amp = rng.random_range(spec.glare_amplitude_range.0..=spec.glare_amplitude_range.1);
        add_blob(&mut out, (cx, cy), sigma, amp);
    }
    out.clamp_unit();
    out
}

fn add_blob(image: &mut ParticleImage, (cx, cy): (f64, f64), sigma: f64, amplitude: f64) {
    if sigma <= 0.0 {
        return;
    }
    let denom = 2.0 * sigma * sigma;
    for j in 0..image.height {
        let dy = j as f64 - cy;
        for i in 0..image.width {
            let dx = i as f64 - cx;
            image.intensity[j * image.width + i] += amplitude * (-(dx * dx + dy * dy) / denom).exp();
        }
    }
}

/// Noise, then occlusion, then glare. Returns the occlusion mask as well.
pub fn apply(image: &ParticleImage, spec: &AugmentSpec) -> Result<(ParticleImage, Vec<bool>), AugmentError> {
    spec.validate()?;
    let noisy = add_noise(image, spec.noise_sigma, spec.rng_seed)?;
    let (occluded, mask) = add_occlusion(&noisy, spec);
    Ok((add_glare(&occluded, spec), mask))
}
