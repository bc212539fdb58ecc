//! Profiled attenuation fit, least-squares criterion and score at a candidate
//! location.
//!
//! For a fixed `theta` the attenuation estimate is the isotonic regression of
//! the responses on the squared distances `|theta - x_i|^2`, so everything
//! here depends on `theta` only through the ranking of those distances.

use serde::{Deserialize, Serialize};

pub use crate::dataset::{ParameterBox, SensorDataset};
use crate::error::{MonolocError, Result};
use crate::isotonic::{pool_into, Block, Direction, MonotoneStepFunction};

/// Profile quantities at one candidate location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEvaluation {
    pub theta: Vec<f64>,
    pub eta: MonotoneStepFunction,
    /// Profiled sum of squared errors.
    pub sse: f64,
    /// Score divided by the sample size.
    pub score: Vec<f64>,
    /// Fitted attenuation at each sensor, in dataset order.
    pub fitted: Vec<f64>,
    pub ordering_hash: u64,
}

impl ProfileEvaluation {
    pub fn residuals<'a>(&'a self, data: &'a SensorDataset) -> impl Iterator<Item = f64> + 'a {
        data.y().iter().zip(&self.fitted).map(|(y, f)| y - f)
    }

    pub fn score_norm(&self) -> f64 {
        norm(&self.score)
    }
}

/// `140 v^3 (1 - v)^3` on `[0, 1]`, zero elsewhere; integrates to one and is
/// twice continuously differentiable.
#[inline]
pub fn smoothing_kernel(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        let w = v * (1.0 - v);
        140.0 * w * w * w
    } else {
        0.0
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Outcome of a workspace evaluation; the score is left in the workspace.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellValue {
    pub sse: f64,
    pub hash: u64,
}

/// Scratch buffers for repeated profile evaluations on one dataset.
///
/// The previous ranking is kept and used as the starting order of the next
/// sort, which makes nearby evaluations close to linear time.
#[derive(Debug, Default, Clone)]
pub(crate) struct ProfileWorkspace {
    keys: Vec<(u64, u32)>,
    group_len: Vec<u32>,
    group_mean: Vec<f64>,
    blocks: Vec<Block>,
    fitted: Vec<f64>,
    pub score: Vec<f64>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
fn fnv_mix(h: u64, v: u64) -> u64 {
    let mut h = h;
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl ProfileWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rank sensors by squared distance to `theta`; ties broken by index.
    fn rank(&mut self, x: &[f64], dim: usize, theta: &[f64]) {
        let n = x.len() / dim;
        if self.keys.len() != n {
            self.keys.clear();
            self.keys.extend((0..n as u32).map(|i| (0, i)));
        }
        for key in self.keys.iter_mut() {
            let p = &x[key.1 as usize * dim..(key.1 as usize + 1) * dim];
            let mut d2 = 0.0;
            for k in 0..dim {
                let diff = theta[k] - p[k];
                d2 += diff * diff;
            }
            // nonnegative floats order like their bit patterns
            key.0 = (d2 + 0.0).to_bits();
        }
        self.keys.sort();
    }

    /// Fit at `theta`. Returns SSE (and the ordering hash when `with_hash`);
    /// `self.score` receives the normalized score `n^-1 sum r_i x_i`.
    pub fn evaluate(
        &mut self,
        x: &[f64],
        y: &[f64],
        dim: usize,
        theta: &[f64],
        direction: Direction,
        with_hash: bool,
    ) -> CellValue {
        self.rank(x, dim, theta);
        self.group_len.clear();
        self.group_mean.clear();
        let mut i = 0;
        let n = self.keys.len();
        while i < n {
            let bits = self.keys[i].0;
            let mut j = i;
            let mut sum = 0.0;
            while j < n && self.keys[j].0 == bits {
                sum += y[self.keys[j].1 as usize];
                j += 1;
            }
            let len = (j - i) as u32;
            self.group_len.push(len);
            self.group_mean.push(sum / len as f64);
            i = j;
        }
        pool_into(
            self.group_mean
                .iter()
                .zip(&self.group_len)
                .map(|(&m, &c)| (m, c as f64)),
            direction,
            &mut self.blocks,
        );

        let mut hash = FNV_OFFSET;
        let mut pos = 0usize;
        let mut group = 0usize;
        self.fitted.resize(n, 0.0);
        for b in &self.blocks {
            let fit = b.mean();
            for _ in 0..b.len {
                let len = self.group_len[group] as usize;
                for &(_, idx) in &self.keys[pos..pos + len] {
                    self.fitted[idx as usize] = fit;
                    if with_hash {
                        hash = fnv_mix(hash, idx as u64);
                    }
                }
                if with_hash {
                    // tie-group boundary marker
                    hash = fnv_mix(hash, u64::MAX);
                }
                pos += len;
                group += 1;
            }
        }
        // Sum in dataset order: rank swaps inside a pooled block leave the
        // fit unchanged and must leave these sums bitwise unchanged too.
        self.score.clear();
        self.score.resize(dim, 0.0);
        let mut sse = 0.0;
        for (idx, (&yi, &fit)) in y.iter().zip(&self.fitted).enumerate() {
            let r = yi - fit;
            sse += r * r;
            let p = &x[idx * dim..(idx + 1) * dim];
            for k in 0..dim {
                self.score[k] += r * p[k];
            }
        }
        let inv_n = 1.0 / n as f64;
        for s in self.score.iter_mut() {
            *s *= inv_n;
        }
        CellValue { sse, hash }
    }

    /// Kernel-smoothed score `n^-1 sum r_i eta'_h(u_i) x_i` for the fit left
    /// by the last [`evaluate`](Self::evaluate) call. Returns false when the
    /// fitted step function has no jumps (the smoothed derivative vanishes).
    pub fn smoothed_field(
        &self,
        x: &[f64],
        y: &[f64],
        dim: usize,
        bandwidth: f64,
        out: &mut Vec<f64>,
    ) -> bool {
        out.clear();
        out.resize(dim, 0.0);
        let mut jumps: Vec<(f64, f64)> = Vec::with_capacity(self.blocks.len());
        let mut pos = 0usize;
        let mut group = 0usize;
        for (b_idx, b) in self.blocks.iter().enumerate() {
            if b_idx > 0 {
                let t = f64::from_bits(self.keys[pos].0);
                jumps.push((t, b.mean() - self.blocks[b_idx - 1].mean()));
            }
            for _ in 0..b.len {
                pos += self.group_len[group] as usize;
                group += 1;
            }
        }
        if jumps.is_empty() {
            return false;
        }
        let inv_h = 1.0 / bandwidth;
        let mut lo = 0usize;
        let mut hi = 0usize;
        let mut pos = 0usize;
        let mut group = 0usize;
        for b in &self.blocks {
            let fit = b.mean();
            for _ in 0..b.len {
                let len = self.group_len[group] as usize;
                let u = f64::from_bits(self.keys[pos].0);
                while hi < jumps.len() && jumps[hi].0 <= u {
                    hi += 1;
                }
                while lo < hi && jumps[lo].0 < u - bandwidth {
                    lo += 1;
                }
                let deriv: f64 = jumps[lo..hi]
                    .iter()
                    .map(|&(t, delta)| smoothing_kernel((u - t) * inv_h) * delta)
                    .sum::<f64>()
                    * inv_h;
                if deriv != 0.0 {
                    for &(_, idx) in &self.keys[pos..pos + len] {
                        let idx = idx as usize;
                        let w = (y[idx] - fit) * deriv;
                        for k in 0..dim {
                            out[k] += w * x[idx * dim + k];
                        }
                    }
                }
                pos += len;
                group += 1;
            }
        }
        let inv_n = 1.0 / self.keys.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv_n);
        true
    }

    /// Full evaluation with the step function and per-sensor fit.
    pub fn profile(
        &mut self,
        data: &SensorDataset,
        theta: &[f64],
        direction: Direction,
    ) -> ProfileEvaluation {
        let dim = data.dim();
        let cell = self.evaluate(data.x(), data.y(), dim, theta, direction, true);
        let mut knots = Vec::with_capacity(self.group_len.len());
        let mut values = Vec::with_capacity(self.group_len.len());
        let mut pos = 0usize;
        let mut group = 0usize;
        for b in &self.blocks {
            let fit = b.mean();
            for _ in 0..b.len {
                let len = self.group_len[group] as usize;
                knots.push(f64::from_bits(self.keys[pos].0));
                values.push(fit);
                pos += len;
                group += 1;
            }
        }
        let domain_upper = data
            .bounds()
            .domain_upper()
            .max(knots.last().copied().unwrap_or(0.0));
        ProfileEvaluation {
            theta: theta.to_vec(),
            eta: MonotoneStepFunction::from_parts_unchecked(knots, values, direction, domain_upper),
            sse: cell.sse,
            score: self.score.clone(),
            fitted: self.fitted.clone(),
            ordering_hash: cell.hash,
        }
    }
}

fn check_theta(data: &SensorDataset, theta: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(MonolocError::EmptyInput);
    }
    if theta.len() != data.dim() {
        return Err(MonolocError::DimensionMismatch {
            expected: data.dim(),
            found: theta.len(),
        });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(MonolocError::InvalidInput("theta must be finite".into()));
    }
    Ok(())
}

/// Profiled isotonic fit, SSE and normalized score at `theta`.
pub fn profile_fit(
    data: &SensorDataset,
    theta: &[f64],
    direction: Direction,
) -> Result<ProfileEvaluation> {
    check_theta(data, theta)?;
    Ok(ProfileWorkspace::new().profile(data, theta, direction))
}

/// Normalized score `n^-1 sum_i (y_i - eta_theta(|theta - x_i|^2)) x_i`.
pub fn score(data: &SensorDataset, theta: &[f64], direction: Direction) -> Result<Vec<f64>> {
    check_theta(data, theta)?;
    let mut ws = ProfileWorkspace::new();
    ws.evaluate(data.x(), data.y(), data.dim(), theta, direction, false);
    Ok(ws.score)
}

fn ranking(data: &SensorDataset, theta: &[f64]) -> Vec<(f64, usize)> {
    let mut keyed: Vec<(f64, usize)> = data
        .points()
        .enumerate()
        .map(|(i, p)| {
            let d2: f64 = p.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed
}

/// Whether the two locations rank the sensors identically by distance,
/// including which adjacent pairs are tied. When true the profiled fits agree.
pub fn criterion_is_ordering_invariant(data: &SensorDataset, theta1: &[f64], theta2: &[f64]) -> bool {
    if theta1.len() != data.dim() || theta2.len() != data.dim() {
        return false;
    }
    let a = ranking(data, theta1);
    let b = ranking(data, theta2);
    if a.iter().zip(&b).any(|(p, q)| p.1 != q.1) {
        return false;
    }
    a.windows(2)
        .zip(b.windows(2))
        .all(|(wa, wb)| (wa[0].0 == wa[1].0) == (wb[0].0 == wb[1].0))
}
