use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MonolocError, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

/// Data-generating truth: attenuation and its derivative, location,
/// conditional error variance, and a covariate sampler.
#[derive(Clone)]
pub struct TruthSpec {
    pub theta0: Vec<f64>,
    pub eta: ScalarFn,
    pub eta_prime: ScalarFn,
    /// `Var(eps | X = x)`.
    pub sigma2: PointFn,
    pub sampler: Sampler,
}

impl fmt::Debug for TruthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruthSpec").field("theta0", &self.theta0).finish_non_exhaustive()
    }
}

impl TruthSpec {
    pub fn new(
        theta0: Vec<f64>,
        eta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        eta_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma2: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            theta0,
            eta: Arc::new(eta),
            eta_prime: Arc::new(eta_prime),
            sigma2: Arc::new(sigma2),
            sampler: Arc::new(sampler),
        }
    }
}

/// Monte Carlo plug-in for the limit covariance of `sqrt(n) (theta_hat - theta0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCovariance {
    /// `E[eta0'(|theta0 - X|^2) Cov(X | |theta0 - X|^2)]`.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    /// Derivative of the expected normalized score at `theta0`, `2 A`.
    pub jacobian: Vec<Vec<f64>>,
    /// `E[sigma^2(X) (X - E[X | U]) (X - E[X | U])']`, `U = |theta0 - X|^2`.
    #[serde(rename = "Sigma")]
    pub sigma: Vec<Vec<f64>>,
    /// `jacobian^-1 Sigma jacobian^-1`.
    pub limit: Vec<Vec<f64>>,
    pub a_se: Vec<Vec<f64>>,
    pub sigma_se: Vec<Vec<f64>>,
    /// Delta-method standard errors of `limit`.
    pub limit_se: Vec<Vec<f64>>,
    pub mc_samples: usize,
    pub bins: usize,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Nested Monte Carlo estimate of `A`, `Sigma` and the limit covariance.
///
/// Conditional moments given `U = |theta0 - X|^2` come from `ceil(sqrt(N))`
/// equal-count bins of the sorted `U`; within-bin covariances use the
/// unbiased divisor.
pub fn asymptotic_covariance_oracle(
    truth: &TruthSpec,
    mc_samples: usize,
    seed: u64,
) -> Result<AsymptoticCovariance> {
    if mc_samples < 10_000 {
        return Err(MonolocError::InvalidInput(format!(
            "mc_samples must be at least 10000, got {mc_samples}"
        )));
    }
    let n = mc_samples;
    let d = truth.theta0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|_| {
            let x = (truth.sampler)(&mut rng);
            let u: f64 = x.iter().zip(&truth.theta0).map(|(a, b)| (a - b) * (a - b)).sum();
            (u, x)
        })
        .collect();
    if draws.iter().any(|(_, x)| x.len() != d) {
        return Err(MonolocError::DimensionMismatch {
            expected: d,
            found: draws.iter().map(|(_, x)| x.len()).find(|&l| l != d).unwrap_or(0),
        });
    }
    draws.sort_by(|a, b| a.0.total_cmp(&b.0));

    let bins = (n as f64).sqrt().ceil() as usize;
    // per-sample contributions, flat d*d blocks, so MC standard errors come for free
    let dd = d * d;
    let mut ca: Vec<f64> = Vec::with_capacity(n * dd);
    let mut cs: Vec<f64> = Vec::with_capacity(n * dd);
    for b in 0..bins {
        let lo = b * n / bins;
        let hi = (b + 1) * n / bins;
        let cnt = hi - lo;
        if cnt < 2 {
            continue;
        }
        let mut mean = vec![0.0; d];
        for (_, x) in &draws[lo..hi] {
            for k in 0..d {
                mean[k] += x[k];
            }
        }
        mean.iter_mut().for_each(|v| *v /= cnt as f64);
        let corr = cnt as f64 / (cnt - 1) as f64;
        for (u, x) in &draws[lo..hi] {
            let ep = (truth.eta_prime)(*u);
            let s2 = (truth.sigma2)(x);
            for i in 0..d {
                for j in 0..d {
                    let o = (x[i] - mean[i]) * (x[j] - mean[j]) * corr;
                    ca.push(o * ep);
                    cs.push(o * s2);
                }
            }
        }
    }
    let count = ca.len() / dd;
    let m = count as f64;
    let block = |c: &[f64], s: usize| DMatrix::from_row_slice(d, d, &c[s * dd..(s + 1) * dd]);
    let mean_of = |c: &[f64]| {
        let mut acc = vec![0.0; dd];
        for s in 0..count {
            for k in 0..dd {
                acc[k] += c[s * dd + k];
            }
        }
        DMatrix::from_row_slice(d, d, &acc) / m
    };
    let se_of = |c: &[f64], mu: &DMatrix<f64>| {
        let mut ss = DMatrix::zeros(d, d);
        for s in 0..count {
            ss += (block(c, s) - mu).map(|e| e * e);
        }
        (ss / (m - 1.0) / m).map(f64::sqrt)
    };
    let a = mean_of(&ca);
    let sigma = mean_of(&cs);
    let a_se = se_of(&ca, &a);
    let sigma_se = se_of(&cs, &sigma);

    let eig = SymmetricEigen::new(a.clone());
    let norm = eig.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |acc, l| acc.min(l.abs()));
    if !(min_abs >= 1e-8 * norm) || norm == 0.0 {
        return Err(MonolocError::SingularA {
            min_abs_eigenvalue: min_abs,
            norm,
        });
    }
    let jac = &a * 2.0;
    let jinv = jac.clone().try_inverse().ok_or(MonolocError::SingularA {
        min_abs_eigenvalue: min_abs,
        norm,
    })?;
    let limit = &jinv * &sigma * &jinv;

    // influence of one draw on the limit, to first order
    let mut ss = DMatrix::zeros(d, d);
    for s in 0..count {
        let dj = (block(&ca, s) - &a) * 2.0;
        let ds = block(&cs, s) - &sigma;
        let infl = -(&jinv * &dj * &limit) - (&limit * &dj * &jinv) + &jinv * ds * &jinv;
        ss += infl.map(|e| e * e);
    }
    let limit_se = (ss / (m - 1.0) / m).map(f64::sqrt);

    Ok(AsymptoticCovariance {
        a: to_rows(&a),
        jacobian: to_rows(&jac),
        sigma: to_rows(&sigma),
        limit: to_rows(&limit),
        a_se: to_rows(&a_se),
        sigma_se: to_rows(&sigma_se),
        limit_se: to_rows(&limit_se),
        mc_samples,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniform_line(sigma2: f64) -> TruthSpec {
        TruthSpec::new(
            vec![0.0],
            |t| -t,
            |_| -1.0,
            move |_| sigma2,
            |rng| vec![rng.random_range(-1.0..1.0)],
        )
    }

    #[test]
    fn one_dimensional_closed_form() {
        let cov = asymptotic_covariance_oracle(&uniform_line(1.0), 40_000, 3).unwrap();
        let a = cov.a[0][0];
        assert!((a + 1.0 / 3.0).abs() <= 3.0 * cov.a_se[0][0], "{a} se {}", cov.a_se[0][0]);
        // Sigma = E[X^2] = 1/3 and J = -2/3 give limit 3/4
        assert!((cov.limit[0][0] - 0.75).abs() <= 3.0 * cov.limit_se[0][0] + 1e-3);
    }

    #[test]
    fn zero_noise_gives_zero_limit() {
        let cov = asymptotic_covariance_oracle(&uniform_line(0.0), 10_000, 1).unwrap();
        assert_eq!(cov.sigma[0][0], 0.0);
        assert_eq!(cov.limit[0][0], 0.0);
    }

    #[test]
    fn flat_attenuation_is_singular() {
        let t = TruthSpec::new(vec![0.0], |_| 1.0, |_| 0.0, |_| 1.0, |rng: &mut ChaCha8Rng| {
            vec![rng.random_range(-1.0..1.0)]
        });
        assert!(matches!(
            asymptotic_covariance_oracle(&t, 10_000, 0),
            Err(MonolocError::SingularA { .. })
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(asymptotic_covariance_oracle(&uniform_line(1.0), 100, 0).is_err());
    }
}
