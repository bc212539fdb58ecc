use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SensorDataset;
use crate::error::{MonolocError, Result};
use crate::estimators::{EstimatorSpec, LocationEstimate};

use super::ellipsoid::{normal_ellipsoid, Ellipsoid};

/// Levels of the ellipsoids attached to every summary.
pub const DEFAULT_LEVELS: [f64; 2] = [0.90, 0.95];

/// Mammen's two-point law: `MAMMEN_LOW` with probability `MAMMEN_P_LOW`,
/// otherwise `MAMMEN_HIGH`. Mean 0, variance 1, third moment 1.
pub const MAMMEN_LOW: f64 = (1.0 - 2.236_067_977_499_79) / 2.0;
pub const MAMMEN_HIGH: f64 = (1.0 + 2.236_067_977_499_79) / 2.0;
pub const MAMMEN_P_LOW: f64 = (2.236_067_977_499_79 + 1.0) / (2.0 * 2.236_067_977_499_79);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    MOutOfN,
    Wild,
}

/// Residual multipliers for the wild bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WildWeights {
    Mammen,
    /// Same multiplier for every residual; `Constant(1.0)` reproduces the data.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub method: BootstrapMethod,
    pub n: usize,
    /// Resample size; equals `n` for the wild bootstrap.
    pub m: usize,
    /// Estimate on the full data; the ellipsoids are centred here.
    pub center: Vec<f64>,
    /// Replicate estimates in replicate order, `None` for failures.
    pub replicates: Vec<Option<Vec<f64>>>,
    pub failed: usize,
    pub effective_b: usize,
    /// `(m / n) * sample covariance` of the successful replicates.
    pub covariance: Vec<Vec<f64>>,
    pub ellipsoids: Vec<Ellipsoid>,
}

impl BootstrapSummary {
    pub fn successful(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.replicates.iter().flatten()
    }

    /// Normal interval for coordinate `k` at `level`.
    pub fn interval(&self, k: usize, level: f64) -> (f64, f64) {
        let z = statrs::function::erf::erf_inv(level) * std::f64::consts::SQRT_2;
        let half = z * self.covariance[k][k].max(0.0).sqrt();
        (self.center[k] - half, self.center[k] + half)
    }
}

/// SplitMix64 finalizer applied to `seed + (index + 1) * golden gamma`.
pub fn mix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `floor(n^(7/8))`, at least 1.
pub fn default_m(n: usize) -> usize {
    ((n as f64).powf(0.875).floor() as usize).clamp(1, n.max(1))
}

pub fn mammen_weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<f64>() < MAMMEN_P_LOW {
        MAMMEN_LOW
    } else {
        MAMMEN_HIGH
    }
}

fn usable(r: Result<LocationEstimate>) -> Option<Vec<f64>> {
    match r {
        Ok(e) if e.converged => Some(e.theta),
        _ => None,
    }
}

fn summarize(
    method: BootstrapMethod,
    n: usize,
    m: usize,
    center: Vec<f64>,
    replicates: Vec<Option<Vec<f64>>>,
) -> Result<BootstrapSummary> {
    let total = replicates.len();
    let failed = replicates.iter().filter(|r| r.is_none()).count();
    let effective_b = total - failed;
    if failed * 10 > total || effective_b < 2 {
        return Err(MonolocError::ResampleFailure { failed, total });
    }
    let d = center.len();
    let mut mean = vec![0.0; d];
    for r in replicates.iter().flatten() {
        for k in 0..d {
            mean[k] += r[k];
        }
    }
    for v in mean.iter_mut() {
        *v /= effective_b as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in replicates.iter().flatten() {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let scale = m as f64 / n as f64 / (effective_b - 1) as f64;
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let ellipsoids = DEFAULT_LEVELS
        .iter()
        .map(|&level| normal_ellipsoid(&center, &cov, level))
        .collect();
    Ok(BootstrapSummary {
        method,
        n,
        m,
        center,
        replicates,
        failed,
        effective_b,
        covariance: cov,
        ellipsoids,
    })
}

fn check_b(b: usize) -> Result<()> {
    if b < 2 {
        return Err(MonolocError::InvalidInput(format!("need at least 2 replicates, got {b}")));
    }
    Ok(())
}

/// m-out-of-n bootstrap around a given full-data estimate.
///
/// Replicate `r` draws `m` indices uniformly with replacement from a
/// ChaCha8 stream seeded with `mix64(seed, r)` and reruns the estimator
/// with search seed `mix64(seed, r)`. Replicates that error or do not
/// converge are recorded as failures; more than 10% is an error.
pub fn bootstrap_m_of_n_at(
    data: &SensorDataset,
    spec: &EstimatorSpec,
    center: &LocationEstimate,
    m: usize,
    b: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    let n = data.len();
    if m == 0 || m > n {
        return Err(MonolocError::InvalidInput(format!("resample size {m} outside 1..={n}")));
    }
    check_b(b)?;
    let replicates: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let s = mix64(seed, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
            let config = spec.config.clone().with_seed(s);
            usable(spec.run_with(&data.select(&idx), &config))
        })
        .collect();
    summarize(BootstrapMethod::MOutOfN, n, m, center.theta.clone(), replicates)
}

/// Fit `spec` on the data, then run [`bootstrap_m_of_n_at`].
pub fn bootstrap_m_of_n(
    data: &SensorDataset,
    spec: &EstimatorSpec,
    m: usize,
    b: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    let center = spec.run(data)?;
    bootstrap_m_of_n_at(data, spec, &center, m, b, seed)
}

/// Wild bootstrap around a given full-data estimate.
///
/// Replicate `r` sets `y* = y + (w - 1) * residual` with one multiplier per
/// sensor drawn from a ChaCha8 stream seeded with `mix64(seed, r)`, which is
/// `fitted + w * residual`. The estimator reruns with the original search
/// settings, so unit weights give back the full-data estimate exactly.
pub fn bootstrap_wild_at(
    data: &SensorDataset,
    spec: &EstimatorSpec,
    center: &LocationEstimate,
    b: usize,
    seed: u64,
    weights: WildWeights,
) -> Result<BootstrapSummary> {
    check_b(b)?;
    let n = data.len();
    let resid: Vec<f64> = data.y().iter().zip(&center.fitted).map(|(y, f)| y - f).collect();
    let replicates: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed, r as u64));
            let y: Vec<f64> = data
                .y()
                .iter()
                .zip(&resid)
                .map(|(&y, &e)| {
                    let w = match weights {
                        WildWeights::Mammen => mammen_weight(&mut rng),
                        WildWeights::Constant(c) => c,
                    };
                    y + (w - 1.0) * e
                })
                .collect();
            let star = data.with_responses(y).ok()?;
            usable(spec.run(&star))
        })
        .collect();
    summarize(BootstrapMethod::Wild, n, n, center.theta.clone(), replicates)
}

/// Fit `spec` on the data, then run [`bootstrap_wild_at`] with Mammen weights.
pub fn bootstrap_wild(
    data: &SensorDataset,
    spec: &EstimatorSpec,
    b: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    let center = spec.run(data)?;
    bootstrap_wild_at(data, spec, &center, b, seed, WildWeights::Mammen)
}
