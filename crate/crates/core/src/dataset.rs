//! Sensor measurements and the monitoring region.

use serde::{Deserialize, Serialize};

use crate::error::{MonolocError, Result};

/// Monitoring region for the target location.
///
/// The box `[lower, upper]` lives in a local frame; a world point is
/// `origin + rotation * local`. Axis-aligned boxes use a zero origin and the
/// identity rotation, so local and world coordinates coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    origin: Vec<f64>,
    /// Row-major orthogonal `d x d` matrix; `None` is the identity.
    rotation: Option<Vec<f64>>,
    radius_bound: f64,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(MonolocError::EmptyInput);
        }
        if lower.len() != upper.len() {
            return Err(MonolocError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(MonolocError::InvalidInput(
                "parameter box needs finite lower < upper in every coordinate".into(),
            ));
        }
        let d = lower.len();
        let mut b = Self {
            lower,
            upper,
            origin: vec![0.0; d],
            rotation: None,
            radius_bound: 0.0,
        };
        b.radius_bound = b.corner_radius();
        Ok(b)
    }

    /// Bounding box of `points` (row-major, `dim` columns) widened by
    /// `fraction` of the side length on each side.
    pub fn around_points(points: &[f64], dim: usize, fraction: f64) -> Result<Self> {
        if points.is_empty() || dim == 0 {
            return Err(MonolocError::EmptyInput);
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks_exact(dim) {
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        for k in 0..dim {
            let mut pad = fraction * (hi[k] - lo[k]);
            if pad <= 0.0 {
                pad = 1.0_f64.max(lo[k].abs() * fraction);
            }
            lo[k] -= pad;
            hi[k] += pad;
        }
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn rotation(&self) -> Option<&[f64]> {
        self.rotation.as_deref()
    }

    /// `T` with `|theta| <= T` over the box and `|x| <= T` over the sensors
    /// the box was paired with.
    pub fn radius_bound(&self) -> f64 {
        self.radius_bound
    }

    pub(crate) fn widen_radius_bound(&mut self, r: f64) {
        self.radius_bound = self.radius_bound.max(r);
    }

    /// Upper end `4 T^2` of the attenuation domain.
    pub fn domain_upper(&self) -> f64 {
        4.0 * self.radius_bound * self.radius_bound
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn local_center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.to_world(&self.local_center())
    }

    pub fn to_world(&self, local: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.to_world_into(local, &mut out);
        out
    }

    pub(crate) fn to_world_into(&self, local: &[f64], out: &mut [f64]) {
        let d = self.dim();
        match &self.rotation {
            None => {
                for k in 0..d {
                    out[k] = self.origin[k] + local[k];
                }
            }
            Some(r) => {
                for i in 0..d {
                    let mut acc = self.origin[i];
                    for j in 0..d {
                        acc += r[i * d + j] * local[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }

    pub fn to_local(&self, world: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let shifted: Vec<f64> = (0..d).map(|k| world[k] - self.origin[k]).collect();
        match &self.rotation {
            None => shifted,
            Some(r) => (0..d)
                .map(|j| (0..d).map(|i| r[i * d + j] * shifted[i]).sum())
                .collect(),
        }
    }

    /// Rotate a local-frame vector (no translation) into world axes.
    pub fn rotate_to_world(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match &self.rotation {
            None => v.to_vec(),
            Some(r) => (0..d)
                .map(|i| (0..d).map(|j| r[i * d + j] * v[j]).sum())
                .collect(),
        }
    }

    pub fn contains_local(&self, local: &[f64], slack: f64) -> bool {
        local
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| v >= l - slack && v <= u + slack)
    }

    pub fn contains(&self, world: &[f64]) -> bool {
        let slack = 1e-9 * self.diameter().max(1.0);
        self.contains_local(&self.to_local(world), slack)
    }

    pub(crate) fn clamp_local(&self, local: &mut [f64]) {
        for (v, (&l, &u)) in local.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(l, u);
        }
    }

    /// Same box shifted by `shift` in world coordinates.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut b = self.clone();
        for (o, s) in b.origin.iter_mut().zip(shift) {
            *o += s;
        }
        b.radius_bound = b.corner_radius();
        b
    }

    /// Same box after applying the orthogonal row-major matrix `rot` to world space.
    pub fn rotated(&self, rot: &[f64]) -> Result<Self> {
        let d = self.dim();
        if rot.len() != d * d {
            return Err(MonolocError::DimensionMismatch {
                expected: d * d,
                found: rot.len(),
            });
        }
        let mut b = self.clone();
        b.origin = (0..d)
            .map(|i| (0..d).map(|j| rot[i * d + j] * self.origin[j]).sum())
            .collect();
        let current = self.rotation.clone().unwrap_or_else(|| identity(d));
        let mut composed = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                composed[i * d + j] = (0..d).map(|k| rot[i * d + k] * current[k * d + j]).sum();
            }
        }
        b.rotation = Some(composed);
        b.radius_bound = self.radius_bound;
        Ok(b)
    }

    fn corner_radius(&self) -> f64 {
        let d = self.dim();
        let mut best = 0.0_f64;
        let mut corner = vec![0.0; d];
        for mask in 0..(1usize << d.min(20)) {
            for k in 0..d {
                corner[k] = if mask >> k & 1 == 1 {
                    self.upper[k]
                } else {
                    self.lower[k]
                };
            }
            let w = self.to_world(&corner);
            best = best.max(w.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        best
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// `n` sensors at locations `x` (row-major `n x d`) with energies `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorDataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    bounds: ParameterBox,
}

impl SensorDataset {
    /// Build a dataset; without `bounds` the sensor bounding box widened by
    /// 10% per side is used.
    pub fn new(x: Vec<f64>, y: Vec<f64>, dim: usize, bounds: Option<ParameterBox>) -> Result<Self> {
        if y.is_empty() || dim == 0 {
            return Err(MonolocError::EmptyInput);
        }
        if x.len() != y.len() * dim {
            return Err(MonolocError::DimensionMismatch {
                expected: y.len() * dim,
                found: x.len(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(MonolocError::InvalidInput(
                "sensor locations and energies must be finite".into(),
            ));
        }
        let mut bounds = match bounds {
            Some(b) => {
                if b.dim() != dim {
                    return Err(MonolocError::DimensionMismatch {
                        expected: dim,
                        found: b.dim(),
                    });
                }
                b
            }
            None => ParameterBox::around_points(&x, dim, 0.1)?,
        };
        let max_norm = x
            .chunks_exact(dim)
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        bounds.widen_radius_bound(max_norm);
        Ok(Self { dim, x, y, bounds })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, bounds: Option<ParameterBox>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(MonolocError::EmptyInput)?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(MonolocError::InvalidInput("ragged sensor rows".into()));
        }
        Self::new(rows.concat(), y, dim, bounds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.x.chunks_exact(self.dim)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn bounds(&self) -> &ParameterBox {
        &self.bounds
    }

    pub fn with_bounds(mut self, bounds: ParameterBox) -> Result<Self> {
        if bounds.dim() != self.dim {
            return Err(MonolocError::DimensionMismatch {
                expected: self.dim,
                found: bounds.dim(),
            });
        }
        self.bounds = bounds;
        let max_norm = self.max_norm();
        self.bounds.widen_radius_bound(max_norm);
        Ok(self)
    }

    /// Same sensors with new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(MonolocError::DimensionMismatch {
                expected: self.len(),
                found: y.len(),
            });
        }
        Ok(Self {
            dim: self.dim,
            x: self.x.clone(),
            y,
            bounds: self.bounds.clone(),
        })
    }

    /// Rows at `indices` (repeats allowed), keeping the monitoring region.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.point(i));
            y.push(self.y[i]);
        }
        Self {
            dim: self.dim,
            x,
            y,
            bounds: self.bounds.clone(),
        }
    }

    /// Shift sensors and region by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut x = self.x.clone();
        for p in x.chunks_exact_mut(self.dim) {
            for (v, s) in p.iter_mut().zip(shift) {
                *v += s;
            }
        }
        let mut out = Self {
            dim: self.dim,
            x,
            y: self.y.clone(),
            bounds: self.bounds.translated(shift),
        };
        let r = out.max_norm();
        out.bounds.widen_radius_bound(r);
        out
    }

    /// Apply the orthogonal row-major matrix `rot` to sensors and region.
    pub fn rotated(&self, rot: &[f64]) -> Result<Self> {
        let d = self.dim;
        let bounds = self.bounds.rotated(rot)?;
        let mut x = vec![0.0; self.x.len()];
        for (src, dst) in self.x.chunks_exact(d).zip(x.chunks_exact_mut(d)) {
            for i in 0..d {
                dst[i] = (0..d).map(|j| rot[i * d + j] * src[j]).sum();
            }
        }
        Ok(Self {
            dim: d,
            x,
            y: self.y.clone(),
            bounds,
        })
    }

    pub fn response_std(&self) -> f64 {
        let n = self.len() as f64;
        let mean = self.y.iter().sum::<f64>() / n;
        (self.y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
    }

    /// Mean Euclidean distance of the sensors from their centroid.
    pub fn location_spread(&self) -> f64 {
        let n = self.len() as f64;
        let mut centroid = vec![0.0; self.dim];
        for p in self.points() {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n;
            }
        }
        self.points()
            .map(|p| {
                p.iter()
                    .zip(&centroid)
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / n
    }

    fn max_norm(&self) -> f64 {
        self.points()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}
