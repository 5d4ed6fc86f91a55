//! Iterative particle image generation.
//!
//! One iteration renders the current ensemble (image 1), advects every
//! particle by the flow sampled at its start position, drops particles that
//! left the canvas, renders the survivors (image 2) and finally tops the
//! ensemble back up to the target density. Image 2 of one iteration is image
//! 1 of the next whenever no particles had to be added.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flowfield::VelocityField;

/// Particle image diameter range, px.
pub const DIAMETER_RANGE: (f64, f64) = (1.5, 3.5);
/// Normalised peak intensity range.
pub const PEAK_INTENSITY_RANGE: (f64, f64) = (0.75, 1.0);
/// Gaussian profiles are evaluated out to this multiple of the diameter,
/// where the exponent reaches -18.
pub const TRUNCATION_RADIUS: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum ParticleError {
    #[error("density {density} on a {width}x{height} canvas yields no particles")]
    NoParticles {
        density: f64,
        width: usize,
        height: usize,
    },
    #[error("flow field is {field_w}x{field_h} but canvas is {canvas_w}x{canvas_h}")]
    DimensionMismatch {
        field_w: usize,
        field_h: usize,
        canvas_w: usize,
        canvas_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    pub peak_intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub target_density: f64,
    rng: ChaCha8Rng,
}

/// Particle count that `density` ppp implies on a `width x height` canvas.
pub fn target_count(density: f64, width: usize, height: usize) -> usize {
    (density * (width * height) as f64).round() as usize
}

impl ParticleEnsemble {
    /// Places `round(density * W * H)` particles uniformly on the canvas.
    pub fn seed(width: usize, height: usize, density: f64, rng_seed: u64) -> Result<Self, ParticleError> {
        if !(density > 0.0) || target_count(density, width, height) == 0 {
            return Err(ParticleError::NoParticles {
                density,
                width,
                height,
            });
        }
        let ensemble = Self {
            particles: Vec::new(),
            canvas_width: width,
            canvas_height: height,
            target_density: density,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        };
        Ok(ensemble.replenish())
    }

    pub fn target_count(&self) -> usize {
        target_count(self.target_density, self.canvas_width, self.canvas_height)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    fn draw_particle(&mut self) -> Particle {
        let x = self.rng.random_range(0.0..self.canvas_width as f64);
        let y = self.rng.random_range(0.0..self.canvas_height as f64);
        let diameter = self.rng.random_range(DIAMETER_RANGE.0..=DIAMETER_RANGE.1);
        let peak_intensity = self.rng.random_range(PEAK_INTENSITY_RANGE.0..=PEAK_INTENSITY_RANGE.1);
        Particle {
            x,
            y,
            diameter,
            peak_intensity,
        }
    }

    fn check_field(&self, field: &VelocityField) -> Result<(), ParticleError> {
        if field.dims() != (self.canvas_width, self.canvas_height) {
            return Err(ParticleError::DimensionMismatch {
                field_w: field.width(),
                field_h: field.height(),
                canvas_w: self.canvas_width,
                canvas_h: self.canvas_height,
            });
        }
        Ok(())
    }

    /// Forward-Euler displacement by the flow sampled at each start position.
    /// Sample points on the last half pixel are clamped onto the grid.
    pub fn advect(&self, field: &VelocityField) -> Result<Self, ParticleError> {
        self.check_field(field)?;
        let max_x = (field.width() - 1) as f64;
        let max_y = (field.height() - 1) as f64;
        let mut next = self.clone();
        for p in &mut next.particles {
            let (u, v) = field.bilinear_unchecked(p.x.clamp(0.0, max_x), p.y.clamp(0.0, max_y));
            p.x += u;
            p.y += v;
        }
        Ok(next)
    }

    /// Removes particles outside `[0, W) x [0, H)`, keeping survivor order.
    pub fn cull(mut self) -> (Self, usize) {
        let (w, h) = (self.canvas_width as f64, self.canvas_height as f64);
        let before = self.particles.len();
        self.particles
            .retain(|p| (0.0..w).contains(&p.x) && (0.0..h).contains(&p.y));
        let removed = before - self.particles.len();
        (self, removed)
    }

    /// Appends new particles until the target count is met.
    pub fn replenish(mut self) -> Self {
        let deficit = self.target_count().saturating_sub(self.particles.len());
        for _ in 0..deficit {
            let p = self.draw_particle();
            self.particles.push(p);
        }
        self
    }

    pub fn render(&self) -> ParticleImage {
        render(&self.particles, self.canvas_width, self.canvas_height)
    }
}

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleImage {
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f64>,
}

impl ParticleImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            intensity: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.intensity[y * self.width + x]
    }

    pub fn clamp_unit(&mut self) {
        for p in &mut self.intensity {
            *p = p.clamp(0.0, 1.0);
        }
    }
}

/// Sums a truncated Gaussian `I0 exp(-8 r^2 / d^2)` per particle at pixel
/// centres, in list order, then clamps to `[0, 1]`.
pub fn render(particles: &[Particle], width: usize, height: usize) -> ParticleImage {
    let mut img = ParticleImage::zeros(width, height);
    for p in particles {
        let radius = TRUNCATION_RADIUS * p.diameter;
        let r2_max = radius * radius;
        let inv = 8.0 / (p.diameter * p.diameter);
        let x_lo = (p.x - radius).ceil().max(0.0);
        let x_hi = (p.x + radius).floor().min(width as f64 - 1.0);
        let y_lo = (p.y - radius).ceil().max(0.0);
        let y_hi = (p.y + radius).floor().min(height as f64 - 1.0);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        for j in y_lo as usize..=y_hi as usize {
            let dy = j as f64 - p.y;
            for i in x_lo as usize..=x_hi as usize {
                let dx = i as f64 - p.x;
                let r2 = dx * dx + dy * dy;
                if r2 <= r2_max {
                    img.intensity[j * width + i] += p.peak_intensity * (-r2 * inv).exp();
                }
            }
        }
    }
    img.clamp_unit();
    img
}

/// Output of one generator iteration.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub image1: ParticleImage,
    pub image2: ParticleImage,
    pub next: ParticleEnsemble,
    /// Particles that left the canvas during this step.
    pub removed: usize,
}

pub fn generate_pair(ensemble: &ParticleEnsemble, field: &VelocityField) -> Result<ImagePair, ParticleError> {
    let image1 = ensemble.render();
    let advected = ensemble.advect(field)?;
    let (culled, removed) = advected.cull();
    let image2 = culled.render();
    let next = culled.replenish();
    Ok(ImagePair {
        image1,
        image2,
        next,
        removed,
    })
}
