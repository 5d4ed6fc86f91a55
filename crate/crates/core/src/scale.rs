//! Flow-field speed scaling by optical magnification.
//!
//! A sub-region `1/k` the linear size of the source is cropped, upsampled
//! back to the source dimensions with separable Lagrange interpolation, and
//! its velocities multiplied by `k`. Factor 4 uses first-order (2-point)
//! interpolation and factor 8 fourth-order (5-point).

use serde::{Deserialize, Serialize};

use crate::flowfield::{FieldError, VelocityField};

/// Upper bound of the Lebesgue function for 5 equispaced nodes over the
/// whole stencil span. A 1-D order-4 interpolant never leaves
/// `mid +- LEBESGUE_ORDER4 * half_range` of its stencil values; the 2-D
/// tensor product is bounded by the square of this constant.
pub const LEBESGUE_ORDER4: f64 = 2.2079;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub factor: u32,
    pub interp_order: u32,
    /// Top-left corner of the crop; `None` centres it.
    pub region_origin: Option<(usize, usize)>,
}

impl ScalingSpec {
    pub const fn identity() -> Self {
        Self {
            factor: 1,
            interp_order: 0,
            region_origin: None,
        }
    }

    /// Canonical spec for factor 1, 4 or 8 with a centred crop.
    pub fn for_factor(factor: u32) -> Result<Self, FieldError> {
        let interp_order = match factor {
            1 => 0,
            4 => 1,
            8 => 4,
            other => {
                return Err(FieldError::Parameter(format!(
                    "scaling factor must be 1, 4 or 8, got {other}"
                )))
            }
        };
        Ok(Self {
            factor,
            interp_order,
            region_origin: None,
        })
    }

    pub fn with_origin(mut self, origin: (usize, usize)) -> Self {
        self.region_origin = Some(origin);
        self
    }

    /// Linear size of the crop relative to the source.
    pub fn region_fraction(&self) -> f64 {
        1.0 / self.factor as f64
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let ok = matches!(
            (self.factor, self.interp_order),
            (1, 0) | (4, 1) | (8, 4)
        );
        if !ok {
            return Err(FieldError::Parameter(format!(
                "inconsistent scaling spec: factor {} with interpolation order {}",
                self.factor, self.interp_order
            )));
        }
        Ok(())
    }

    /// Crop rectangle `(x0, y0, w, h)` for a source of the given size.
    pub fn region(&self, width: usize, height: usize) -> Result<(usize, usize, usize, usize), FieldError> {
        self.validate()?;
        let k = self.factor as usize;
        let (w, h) = (width / k, height / k);
        if w < 2 || h < 2 {
            return Err(FieldError::Parameter(format!(
                "{width}x{height} field too small for a 1/{k} crop"
            )));
        }
        let (x0, y0) = self
            .region_origin
            .unwrap_or(((width - w) / 2, (height - h) / 2));
        if x0 + w > width || y0 + h > height {
            return Err(FieldError::OutOfBounds {
                x: (x0 + w) as f64,
                y: (y0 + h) as f64,
                max_x: width as f64,
                max_y: height as f64,
            });
        }
        Ok((x0, y0, w, h))
    }
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn extract_subregion(field: &VelocityField, spec: &ScalingSpec) -> Result<VelocityField, FieldError> {
    let (x0, y0, w, h) = spec.region(field.width(), field.height())?;
    if spec.factor == 1 {
        return Ok(field.clone());
    }
    let cropped = VelocityField::from_fn(w, h, |i, j| field.at(x0 + i, y0 + j))?;
    Ok(cropped.with_time_index(field.time_index))
}

/// Stencil start and Lagrange weights for evaluating at `x` on a grid of
/// `len` unit-spaced nodes. The window is centred on `x` and clamped to lie
/// inside the grid.
pub fn stencil(len: usize, x: f64, order: u32) -> Result<(usize, Vec<f64>), FieldError> {
    let points = order as usize + 1;
    if order != 1 && order != 4 {
        return Err(FieldError::Parameter(format!(
            "interpolation order must be 1 or 4, got {order}"
        )));
    }
    if len < points {
        return Err(FieldError::Parameter(format!(
            "order {order} needs at least {points} nodes, grid has {len}"
        )));
    }
    let last_start = (len - points) as f64;
    let start = match order {
        1 => x.floor(),
        _ => x.round() - 2.0,
    }
    .clamp(0.0, last_start) as usize;
    let nodes: Vec<f64> = (start..start + points).map(|n| n as f64).collect();
    let weights = nodes
        .iter()
        .enumerate()
        .map(|(k, &xk)| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != k)
                .map(|(_, &xm)| (x - xm) / (xk - xm))
                .product()
        })
        .collect();
    Ok((start, weights))
}

/// Align-corners source coordinate of output node `i`.
fn source_coord(i: usize, src_len: usize, dst_len: usize) -> f64 {
    if dst_len == 1 {
        return 0.0;
    }
    (i * (src_len - 1)) as f64 / (dst_len - 1) as f64
}

fn axis_stencils(src_len: usize, dst_len: usize, order: u32) -> Result<Vec<(usize, Vec<f64>)>, FieldError> {
    (0..dst_len)
        .map(|i| stencil(src_len, source_coord(i, src_len, dst_len), order))
        .collect()
}

fn upsample_component(
    src: &[f64],
    (w, h): (usize, usize),
    (tw, th): (usize, usize),
    xs: &[(usize, Vec<f64>)],
    ys: &[(usize, Vec<f64>)],
) -> Vec<f64> {
    let mut rows = vec![0.0; h * tw];
    for j in 0..h {
        let line = &src[j * w..(j + 1) * w];
        for (i, (start, weights)) in xs.iter().enumerate() {
            rows[j * tw + i] = weights
                .iter()
                .zip(&line[*start..])
                .map(|(c, val)| c * val)
                .sum();
        }
    }
    let mut out = vec![0.0; th * tw];
    for (j, (start, weights)) in ys.iter().enumerate() {
        for i in 0..tw {
            out[j * tw + i] = weights
                .iter()
                .enumerate()
                .map(|(k, c)| c * rows[(start + k) * tw + i])
                .sum();
        }
    }
    out
}

/// Separable Lagrange upsampling of both velocity components.
pub fn lagrange_upsample(
    field: &VelocityField,
    target_width: usize,
    target_height: usize,
    order: u32,
) -> Result<VelocityField, FieldError> {
    let (w, h) = field.dims();
    if target_width < w || target_height < h {
        return Err(FieldError::Parameter(format!(
            "target {target_width}x{target_height} smaller than source {w}x{h}"
        )));
    }
    let xs = axis_stencils(w, target_width, order)?;
    let ys = axis_stencils(h, target_height, order)?;
    let dims = (target_width, target_height);
    let u = upsample_component(field.u(), (w, h), dims, &xs, &ys);
    let v = upsample_component(field.v(), (w, h), dims, &xs, &ys);
    Ok(VelocityField::new(target_width, target_height, u, v)?.with_time_index(field.time_index))
}

/// Crop and upsample back to the source size, without amplification.
pub fn resample(field: &VelocityField, spec: &ScalingSpec) -> Result<VelocityField, FieldError> {
    spec.validate()?;
    if spec.factor == 1 {
        return Ok(field.clone());
    }
    let crop = extract_subregion(field, spec)?;
    lagrange_upsample(&crop, field.width(), field.height(), spec.interp_order)
}

/// Crop, upsample and amplify by `spec.factor`.
pub fn apply_scaling(field: &VelocityField, spec: &ScalingSpec) -> Result<VelocityField, FieldError> {
    let resampled = resample(field, spec)?;
    if spec.factor == 1 {
        return Ok(resampled);
    }
    Ok(resampled.scaled(spec.factor as f64))
}
