//! Velocity fields, analytic generators and sub-pixel sampling.
//!
//! Fields are stored row-major in px/frame. Pixel `(i, j)` sits at continuous
//! coordinate `(x, y) = (i, j)`, so sampling at integer coordinates returns
//! the stored node exactly.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("field must be at least 2x2, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("component length {got} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("non-finite velocity at node ({x}, {y})")]
    NonFinite { x: usize, y: usize },
    #[error("sample point ({x}, {y}) outside [0, {max_x}] x [0, {max_y}]")]
    OutOfBounds {
        x: f64,
        y: f64,
        max_x: f64,
        max_y: f64,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("Blasius shooting did not converge after {iterations} iterations (residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },
}

/// Dense 2-D ground-truth flow: one `(u, v)` vector per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    pub time_index: usize,
}

impl VelocityField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self, FieldError> {
        if width < 2 || height < 2 {
            return Err(FieldError::TooSmall { width, height });
        }
        for comp in [&u, &v] {
            if comp.len() != width * height {
                return Err(FieldError::LengthMismatch {
                    width,
                    height,
                    got: comp.len(),
                });
            }
        }
        if let Some(idx) = u
            .iter()
            .zip(&v)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(FieldError::NonFinite {
                x: idx % width,
                y: idx / width,
            });
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            time_index: 0,
        })
    }

    /// Builds a field by evaluating `f(x, y)` at every node.
    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Result<Self, FieldError>
    where
        F: FnMut(usize, usize) -> (f64, f64),
    {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self::new(width, height, u, v)
    }

    pub fn with_time_index(mut self, time_index: usize) -> Self {
        self.time_index = time_index;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let idx = y * self.width + x;
        (self.u[idx], self.v[idx])
    }

    /// Per-node speed magnitude `sqrt(u^2 + v^2)`.
    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.u.iter().zip(&self.v).map(|(a, b)| a.hypot(*b))
    }

    pub fn mean_speed(&self) -> f64 {
        self.speeds().sum::<f64>() / (self.width * self.height) as f64
    }

    /// Multiplies every vector by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|a| a * k).collect(),
            v: self.v.iter().map(|b| b * k).collect(),
            time_index: self.time_index,
        }
    }

    /// Bilinear interpolation of the four surrounding nodes.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Result<(f64, f64), FieldError> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(0.0..=max_x).contains(&x) || !(0.0..=max_y).contains(&y) {
            return Err(FieldError::OutOfBounds { x, y, max_x, max_y });
        }
        Ok(self.bilinear_unchecked(x, y))
    }

    pub(crate) fn bilinear_unchecked(&self, x: f64, y: f64) -> (f64, f64) {
        // cell origin clamped so the far edge uses the last cell with t = 1
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;
        let i00 = y0 * self.width + x0;
        let i10 = i00 + 1;
        let i01 = i00 + self.width;
        let i11 = i01 + 1;
        let blend = |g: &[f64]| {
            let top = (1.0 - tx) * g[i00] + tx * g[i10];
            let bottom = (1.0 - tx) * g[i01] + tx * g[i11];
            (1.0 - ty) * top + ty * bottom
        };
        (blend(&self.u), blend(&self.v))
    }
}

pub fn make_uniform(width: usize, height: usize, u0: f64, v0: f64) -> Result<VelocityField, FieldError> {
    VelocityField::new(
        width,
        height,
        vec![u0; width * height],
        vec![v0; width * height],
    )
}

/// Lamb-Oseen vortex, counter-clockwise for positive circulation.
pub fn make_lamb_oseen(
    width: usize,
    height: usize,
    circulation: f64,
    core_radius: f64,
    center: (f64, f64),
) -> Result<VelocityField, FieldError> {
    if !(core_radius > 0.0) {
        return Err(FieldError::Parameter(format!(
            "core_radius must be positive, got {core_radius}"
        )));
    }
    VelocityField::from_fn(width, height, |i, j| {
        let dx = i as f64 - center.0;
        let dy = j as f64 - center.1;
        let r = dx.hypot(dy);
        if r == 0.0 {
            return (0.0, 0.0);
        }
        let speed = lamb_oseen_speed(circulation, core_radius, r);
        (-speed * dy / r, speed * dx / r)
    })
}

/// Tangential speed of a Lamb-Oseen vortex at radius `r`.
pub fn lamb_oseen_speed(circulation: f64, core_radius: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    circulation / (2.0 * PI * r) * (1.0 - (-(r * r) / (core_radius * core_radius)).exp())
}

/// Default RK4 step for the similarity solution.
pub const BLASIUS_STEP: f64 = 1e-3;
pub const BLASIUS_SHOOT_TOL: f64 = 1e-8;
pub const BLASIUS_ETA_MAX: f64 = 10.0;
const BLASIUS_MAX_ITER: usize = 100;

/// Solution of `f''' + f f'' / 2 = 0` on `[0, eta_max]` with
/// `f(0) = f'(0) = 0`, `f'(eta_max) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlasiusProfile {
    pub eta_grid: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub f_double_prime: Vec<f64>,
}

impl BlasiusProfile {
    /// Wall curvature `f''(0)` found by the shooting iteration.
    pub fn wall_curvature(&self) -> f64 {
        self.f_double_prime[0]
    }

    pub fn eta_max(&self) -> f64 {
        *self.eta_grid.last().expect("profile is never empty")
    }

    /// `(f, f')` at `eta`, linear between grid nodes. Beyond the solved range
    /// the free-stream asymptote `f' = f'(eta_max)` is continued.
    pub fn eval(&self, eta: f64) -> (f64, f64) {
        let n = self.eta_grid.len() - 1;
        let eta_max = self.eta_grid[n];
        if eta >= eta_max {
            let fp = self.f_prime[n];
            return (self.f[n] + fp * (eta - eta_max), fp);
        }
        let eta = eta.max(0.0);
        let h = eta_max / n as f64;
        let k = ((eta / h) as usize).min(n - 1);
        let t = (eta - self.eta_grid[k]) / h;
        (
            (1.0 - t) * self.f[k] + t * self.f[k + 1],
            (1.0 - t) * self.f_prime[k] + t * self.f_prime[k + 1],
        )
    }
}

fn blasius_rhs(y: [f64; 3]) -> [f64; 3] {
    [y[1], y[2], -0.5 * y[0] * y[2]]
}

fn rk4(y: [f64; 3], h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = blasius_rhs(y);
    let k2 = blasius_rhs(add(y, k1, h / 2.0));
    let k3 = blasius_rhs(add(y, k2, h / 2.0));
    let k4 = blasius_rhs(add(y, k3, h));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

fn integrate(curvature: f64, steps: usize, h: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = [0.0, 0.0, curvature];
    out.push(y);
    for _ in 0..steps {
        y = rk4(y, h);
        out.push(y);
    }
    out
}

fn terminal_residual(curvature: f64, steps: usize, h: f64) -> f64 {
    let mut y = [0.0, 0.0, curvature];
    for _ in 0..steps {
        y = rk4(y, h);
    }
    y[1] - 1.0
}

/// Shoots on `f''(0)` with fixed-step RK4 and a secant update, falling back
/// to bisection whenever the secant leaves the current sign-change bracket.
pub fn solve_blasius(eta_max: f64, step: f64, shoot_tol: f64) -> Result<BlasiusProfile, FieldError> {
    if !(eta_max >= 8.0) || !(step > 0.0) || !(shoot_tol > 0.0) {
        return Err(FieldError::Parameter(format!(
            "need eta_max >= 8, step > 0, shoot_tol > 0 (got {eta_max}, {step}, {shoot_tol})"
        )));
    }
    let steps = (eta_max / step).round().max(1.0) as usize;
    let h = eta_max / steps as f64;

    let (mut lo, mut hi) = (0.1, 1.0);
    let (mut g_lo, g_hi) = (terminal_residual(lo, steps, h), terminal_residual(hi, steps, h));
    if g_lo.signum() == g_hi.signum() {
        return Err(FieldError::SolverFailure {
            iterations: 0,
            residual: g_lo.abs().min(g_hi.abs()),
        });
    }
    // secant iterates
    let (mut s_prev, mut g_prev) = (lo, g_lo);
    let (mut s, mut g) = (hi, g_hi);
    let mut converged = g.abs() < shoot_tol;
    let mut iterations = 0;
    while !converged && iterations < BLASIUS_MAX_ITER {
        iterations += 1;
        let mut next = s - g * (s - s_prev) / (g - g_prev);
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let g_next = terminal_residual(next, steps, h);
        if g_next.signum() == g_lo.signum() {
            lo = next;
            g_lo = g_next;
        } else {
            hi = next;
        }
        s_prev = s;
        g_prev = g;
        s = next;
        g = g_next;
        converged = g.abs() < shoot_tol;
    }
    if !converged {
        return Err(FieldError::SolverFailure {
            iterations,
            residual: g.abs(),
        });
    }

    let states = integrate(s, steps, h);
    let mut profile = BlasiusProfile {
        eta_grid: (0..=steps).map(|k| k as f64 * h).collect(),
        f: Vec::with_capacity(steps + 1),
        f_prime: Vec::with_capacity(steps + 1),
        f_double_prime: Vec::with_capacity(steps + 1),
    };
    for y in states {
        profile.f.push(y[0]);
        profile.f_prime.push(y[1]);
        profile.f_double_prime.push(y[2]);
    }
    Ok(profile)
}

/// Physical placement of the similarity profile on the pixel grid.
///
/// The plate lies along row 0; `y` (row index) is the wall-normal distance
/// and `x = x_offset + column` is the distance from the leading edge, all in
/// pixels. The defaults reproduce a mean speed of 3.7822 px/frame and a
/// standard deviation of 2.1542 px/frame on a 256x256 canvas.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlasiusFieldParams {
    /// Free-stream speed before amplification, px/frame.
    pub u_inf: f64,
    /// Leading-edge offset of column 0, px.
    pub x_offset: f64,
    /// Kinematic viscosity in px^2/frame.
    pub viscosity_scale: f64,
    pub amplification: f64,
}

impl Default for BlasiusFieldParams {
    fn default() -> Self {
        Self {
            u_inf: 0.117_591,
            x_offset: 16.0,
            viscosity_scale: 3.481_05,
            amplification: 50.0,
        }
    }
}

pub fn make_blasius_field(
    profile: &BlasiusProfile,
    width: usize,
    height: usize,
    params: &BlasiusFieldParams,
) -> Result<VelocityField, FieldError> {
    let BlasiusFieldParams {
        u_inf,
        x_offset,
        viscosity_scale,
        amplification,
    } = *params;
    if !(u_inf > 0.0) || !(x_offset > 0.0) || !(viscosity_scale > 0.0) {
        return Err(FieldError::Parameter(format!(
            "u_inf, x_offset and viscosity_scale must be positive (got {u_inf}, {x_offset}, {viscosity_scale})"
        )));
    }
    VelocityField::from_fn(width, height, |i, j| {
        let x = x_offset + i as f64;
        let eta = j as f64 * (u_inf / (viscosity_scale * x)).sqrt();
        let (f, fp) = profile.eval(eta);
        let u = amplification * u_inf * fp;
        let v = amplification * 0.5 * (viscosity_scale * u_inf / x).sqrt() * (eta * fp - f);
        (u, v)
    })
}

/// Finds the viscosity that gives the requested mean speed, holding the other
/// parameters fixed. Mean speed decreases monotonically as the layer
/// thickens, so a bisection over `[lo, hi]` suffices.
pub fn calibrate_viscosity(
    profile: &BlasiusProfile,
    width: usize,
    height: usize,
    params: &BlasiusFieldParams,
    target_mean: f64,
    (mut lo, mut hi): (f64, f64),
) -> Result<f64, FieldError> {
    let mean_at = |nu: f64| {
        let p = BlasiusFieldParams {
            viscosity_scale: nu,
            ..*params
        };
        make_blasius_field(profile, width, height, &p).map(|f| f.mean_speed())
    };
    let (m_lo, m_hi) = (mean_at(lo)?, mean_at(hi)?);
    if !(m_lo >= target_mean && target_mean >= m_hi) {
        return Err(FieldError::Parameter(format!(
            "target mean {target_mean} not bracketed by [{m_hi}, {m_lo}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid)? > target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
