//! Single-pass FFT cross-correlation PIV, used as the reference estimator
//! for closing the generate -> estimate -> score loop.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowfield::{FieldError, VelocityField};
use crate::particles::ParticleImage;

#[derive(Debug, Error, PartialEq)]
pub enum XcorrError {
    #[error("invalid estimator configuration: {0}")]
    Config(String),
    #[error("images differ in size: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("image {0:?} smaller than the {1}px window")]
    ImageTooSmall((usize, usize), usize),
    #[error("no interrogation window produced a valid vector")]
    EstimationFailure,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubpixelFit {
    /// Three-point Gaussian (log-parabola) fit.
    #[default]
    Gaussian3,
    Parabolic3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMode {
    /// Zero-padded to twice the window, normalised by the overlap area.
    #[default]
    Padded,
    /// Periodic correlation over the bare window.
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XcorrConfig {
    pub window: usize,
    pub overlap: f64,
    pub subpixel: SubpixelFit,
    /// Largest accepted displacement per axis; `None` means `window / 2`.
    pub search_clip: Option<f64>,
    pub mode: CorrelationMode,
}

impl Default for XcorrConfig {
    fn default() -> Self {
        Self {
            window: 32,
            overlap: 0.5,
            subpixel: SubpixelFit::Gaussian3,
            search_clip: None,
            mode: CorrelationMode::Padded,
        }
    }
}

impl XcorrConfig {
    pub fn validate(&self) -> Result<(), XcorrError> {
        if self.window < 8 || !self.window.is_power_of_two() {
            return Err(XcorrError::Config(format!(
                "window must be a power of two >= 8, got {}",
                self.window
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(XcorrError::Config(format!("overlap must lie in [0, 1), got {}", self.overlap)));
        }
        if let Some(c) = self.search_clip {
            if !(c >= 1.0) {
                return Err(XcorrError::Config(format!("search_clip must be >= 1, got {c}")));
            }
        }
        Ok(())
    }

    pub fn clip(&self) -> f64 {
        self.search_clip.unwrap_or(self.window as f64 / 2.0)
    }

    pub fn stride(&self) -> usize {
        ((self.window as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }
}

/// Outcome of correlating one pair of interrogation windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowEstimate {
    Displacement(f64, f64),
    /// A window without intensity variation (no particles).
    NoSignal,
    /// The correlation peak sits on the search-clip border.
    OutOfRange,
}

impl WindowEstimate {
    pub fn vector(&self) -> Option<(f64, f64)> {
        match *self {
            WindowEstimate::Displacement(dx, dy) => Some((dx, dy)),
            _ => None,
        }
    }
}

/// Cached FFT plans for one window size and mode.
pub struct Correlator {
    config: XcorrConfig,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Correlator {
    pub fn new(config: XcorrConfig) -> Result<Self, XcorrError> {
        config.validate()?;
        let size = match config.mode {
            CorrelationMode::Padded => 2 * config.window,
            CorrelationMode::Circular => config.window,
        };
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    fn fft2(&self, buf: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let n = self.size;
        fft.process(buf);
        transpose(buf, n);
        fft.process(buf);
        transpose(buf, n);
    }

    fn spectrum(&self, patch: &[f64]) -> Option<Vec<Complex<f64>>> {
        let w = self.config.window;
        let n = self.size;
        let mean = patch.iter().sum::<f64>() / patch.len() as f64;
        let energy: f64 = patch.iter().map(|p| (p - mean) * (p - mean)).sum();
        if energy <= 1e-12 {
            return None;
        }
        let mut buf = vec![Complex::new(0.0, 0.0); n * n];
        for j in 0..w {
            for i in 0..w {
                buf[j * n + i].re = patch[j * w + i] - mean;
            }
        }
        self.fft2(&mut buf, &self.forward);
        Some(buf)
    }

    /// Correlation value at integer lag `(dx, dy)` from the surface.
    fn lag(&self, surface: &[f64], dx: i64, dy: i64) -> f64 {
        let n = self.size as i64;
        let ix = dx.rem_euclid(n) as usize;
        let iy = dy.rem_euclid(n) as usize;
        surface[iy * self.size + ix]
    }

    /// Displacement of `patch2` relative to `patch1`, both `window x window`
    /// row-major.
    pub fn correlate(&self, patch1: &[f64], patch2: &[f64]) -> WindowEstimate {
        let w = self.config.window;
        debug_assert_eq!(patch1.len(), w * w);
        debug_assert_eq!(patch2.len(), w * w);
        let (Some(a), Some(b)) = (self.spectrum(patch1), self.spectrum(patch2)) else {
            return WindowEstimate::NoSignal;
        };
        let mut cross: Vec<Complex<f64>> = a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect();
        self.fft2(&mut cross, &self.inverse);
        let n = self.size;
        let mut surface: Vec<f64> = cross.iter().map(|c| c.re / (n * n) as f64).collect();
        if self.config.mode == CorrelationMode::Padded {
            for iy in 0..n {
                for ix in 0..n {
                    let dx = signed_lag(ix, n).unsigned_abs() as usize;
                    let dy = signed_lag(iy, n).unsigned_abs() as usize;
                    let overlap = (w.saturating_sub(dx) * w.saturating_sub(dy)) as f64;
                    surface[iy * n + ix] = if overlap > 0.0 {
                        surface[iy * n + ix] / overlap
                    } else {
                        0.0
                    };
                }
            }
        }

        let clip = self.config.clip().min((n / 2) as f64 - 1.0).floor() as i64;
        let mut best = (0i64, 0i64);
        let mut best_val = f64::NEG_INFINITY;
        for dy in -clip..=clip {
            for dx in -clip..=clip {
                let v = self.lag(&surface, dx, dy);
                if v > best_val {
                    best_val = v;
                    best = (dx, dy);
                }
            }
        }
        if best.0.abs() == clip || best.1.abs() == clip {
            return WindowEstimate::OutOfRange;
        }
        let (px, py) = best;
        let fit = |m: f64, c: f64, p: f64| peak_offset(m, c, p, self.config.subpixel);
        let sx = fit(self.lag(&surface, px - 1, py), best_val, self.lag(&surface, px + 1, py));
        let sy = fit(self.lag(&surface, px, py - 1), best_val, self.lag(&surface, px, py + 1));
        WindowEstimate::Displacement(px as f64 + sx, py as f64 + sy)
    }
}

fn signed_lag(i: usize, n: usize) -> i64 {
    if i > n / 2 {
        i as i64 - n as i64
    } else {
        i as i64
    }
}

fn transpose(buf: &mut [Complex<f64>], n: usize) {
    for j in 0..n {
        for i in j + 1..n {
            buf.swap(j * n + i, i * n + j);
        }
    }
}

/// Sub-pixel offset of a peak from three samples around it. The Gaussian
/// fit falls back to the parabola when a sample is not positive.
pub fn peak_offset(minus: f64, centre: f64, plus: f64, fit: SubpixelFit) -> f64 {
    let gaussian_ok = minus > 0.0 && centre > 0.0 && plus > 0.0;
    let (m, c, p) = if fit == SubpixelFit::Gaussian3 && gaussian_ok {
        (minus.ln(), centre.ln(), plus.ln())
    } else {
        (minus, centre, plus)
    };
    let denom = 2.0 * m - 4.0 * c + 2.0 * p;
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    ((m - p) / denom).clamp(-0.5, 0.5)
}

/// Correlates two equal-size windows with a one-off [`Correlator`].
pub fn correlate_window(patch1: &[f64], patch2: &[f64], config: &XcorrConfig) -> Result<WindowEstimate, XcorrError> {
    let w = config.window;
    if patch1.len() != w * w || patch2.len() != w * w {
        return Err(XcorrError::Config(format!(
            "patches must hold {} samples, got {} and {}",
            w * w,
            patch1.len(),
            patch2.len()
        )));
    }
    Ok(Correlator::new(*config)?.correlate(patch1, patch2))
}

/// Vectors on the interrogation-window grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGrid {
    /// Window centres in pixel coordinates.
    pub centers_x: Vec<f64>,
    pub centers_y: Vec<f64>,
    pub estimates: Vec<WindowEstimate>,
}

impl VectorGrid {
    pub fn nx(&self) -> usize {
        self.centers_x.len()
    }

    pub fn ny(&self) -> usize {
        self.centers_y.len()
    }

    pub fn valid_count(&self) -> usize {
        self.estimates.iter().filter(|e| e.vector().is_some()).count()
    }

    /// Replaces invalid vectors by inverse-distance-squared weighting of the
    /// eight nearest valid ones.
    pub fn filled(&self) -> Result<Vec<(f64, f64)>, XcorrError> {
        let nx = self.nx();
        let valid: Vec<(usize, (f64, f64))> = self
            .estimates
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.vector().map(|v| (k, v)))
            .collect();
        if valid.is_empty() {
            return Err(XcorrError::EstimationFailure);
        }
        let pos = |k: usize| (self.centers_x[k % nx], self.centers_y[k / nx]);
        Ok(self
            .estimates
            .iter()
            .enumerate()
            .map(|(k, e)| {
                if let Some(v) = e.vector() {
                    return v;
                }
                let (x, y) = pos(k);
                let mut near: Vec<(f64, usize, (f64, f64))> = valid
                    .iter()
                    .map(|&(m, v)| {
                        let (mx, my) = pos(m);
                        ((mx - x).powi(2) + (my - y).powi(2), m, v)
                    })
                    .collect();
                near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
                for (d2, _, (u, v)) in near.into_iter().take(8) {
                    let wgt = 1.0 / d2;
                    su += wgt * u;
                    sv += wgt * v;
                    sw += wgt;
                }
                (su / sw, sv / sw)
            })
            .collect())
    }
}

fn extract(image: &ParticleImage, x0: usize, y0: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * w);
    for j in y0..y0 + w {
        out.extend_from_slice(&image.intensity[j * image.width + x0..j * image.width + x0 + w]);
    }
    out
}

fn window_origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    (0..=len - window).step_by(stride).collect()
}

/// Per-window displacements of `image2` relative to `image1`.
pub fn estimate_vectors(image1: &ParticleImage, image2: &ParticleImage, config: &XcorrConfig) -> Result<VectorGrid, XcorrError> {
    config.validate()?;
    let dims = (image1.width, image1.height);
    if dims != (image2.width, image2.height) {
        return Err(XcorrError::DimensionMismatch(dims, (image2.width, image2.height)));
    }
    let w = config.window;
    if dims.0 < w || dims.1 < w {
        return Err(XcorrError::ImageTooSmall(dims, w));
    }
    let stride = config.stride();
    let xs = window_origins(dims.0, w, stride);
    let ys = window_origins(dims.1, w, stride);
    let correlator = Correlator::new(*config)?;
    let half = (w - 1) as f64 / 2.0;
    let estimates = (0..xs.len() * ys.len())
        .into_par_iter()
        .map(|k| {
            let (x0, y0) = (xs[k % xs.len()], ys[k / xs.len()]);
            correlator.correlate(&extract(image1, x0, y0, w), &extract(image2, x0, y0, w))
        })
        .collect();
    Ok(VectorGrid {
        centers_x: xs.iter().map(|&x| x as f64 + half).collect(),
        centers_y: ys.iter().map(|&y| y as f64 + half).collect(),
        estimates,
    })
}

/// Fractional grid coordinate of pixel coordinate `p`, clamped to the grid.
fn grid_coord(p: f64, centers: &[f64]) -> (usize, f64) {
    if centers.len() == 1 || p <= centers[0] {
        return (0, 0.0);
    }
    let last = centers.len() - 1;
    if p >= centers[last] {
        return (last - 1, 1.0);
    }
    let step = centers[1] - centers[0];
    let g = (p - centers[0]) / step;
    let k = (g.floor() as usize).min(last - 1);
    (k, g - k as f64)
}

/// Dense per-pixel flow from window vectors: invalid windows are filled,
/// then the grid is interpolated bilinearly (constant beyond the outer
/// window centres).
pub fn estimate_flow(image1: &ParticleImage, image2: &ParticleImage, config: &XcorrConfig) -> Result<VelocityField, XcorrError> {
    let grid = estimate_vectors(image1, image2, config)?;
    let vectors = grid.filled()?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let at = |i: usize, j: usize| vectors[j.min(ny - 1) * nx + i.min(nx - 1)];
    let cols: Vec<(usize, f64)> = (0..image1.width).map(|x| grid_coord(x as f64, &grid.centers_x)).collect();
    let field = VelocityField::from_fn(image1.width, image1.height, |x, y| {
        let (gx, tx) = cols[x];
        let (gy, ty) = grid_coord(y as f64, &grid.centers_y);
        let (a, b, c, d) = (at(gx, gy), at(gx + 1, gy), at(gx, gy + 1), at(gx + 1, gy + 1));
        let lerp = |p: f64, q: f64, t: f64| (1.0 - t) * p + t * q;
        (
            lerp(lerp(a.0, b.0, tx), lerp(c.0, d.0, tx), ty),
            lerp(lerp(a.1, b.1, tx), lerp(c.1, d.1, tx), ty),
        )
    })?;
    Ok(field)
}
