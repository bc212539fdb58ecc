use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MonolocError, Result};
use crate::estimators::{EstimatorSpec, Method, SearchConfig};
use crate::inference::{
    bootstrap_m_of_n_at, bootstrap_wild_at, mix64, BootstrapMethod, WildWeights,
};

use super::spec::{generate, ScenarioConfig};

/// Results of one (scenario, n, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub scenario: String,
    pub n: usize,
    pub method: Method,
    pub replications: usize,
    /// Replications where the estimator returned an error.
    pub failures: usize,
    pub non_converged: usize,
    /// `n * var(theta_1)` over the successful replications.
    pub scaled_variance: f64,
    /// Mean of `theta_1 - theta0_1`.
    pub bias: f64,
    /// Median of `|theta - theta0|`.
    pub median_abs_error: f64,
    /// Attenuation with a kink.
    pub non_differentiable: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub rows: Vec<VarianceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub scenario: String,
    pub n: usize,
    pub method: BootstrapMethod,
    pub m: usize,
    pub level: f64,
    pub datasets: usize,
    /// Datasets whose fit or bootstrap failed; excluded from `coverage`.
    pub failures: usize,
    pub covered: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub non_differentiable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
}

/// Settings of a coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSpec {
    pub methods: Vec<BootstrapMethod>,
    /// `m = floor(n^m_exponent)`.
    pub m_exponent: f64,
    pub replicates: usize,
    /// Search settings for the full-data fit and every replicate.
    pub search: SearchConfig,
}

impl Default for CoverageSpec {
    fn default() -> Self {
        Self {
            methods: vec![BootstrapMethod::MOutOfN, BootstrapMethod::Wild],
            m_exponent: 0.875,
            replicates: 200,
            search: SearchConfig::light(),
        }
    }
}

/// Seed of replication `r` of a scenario.
pub fn replication_seed(scenario: &ScenarioConfig, r: usize) -> u64 {
    mix64(scenario.seed, r as u64)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn sample_variance(v: &[f64]) -> f64 {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0)
}

/// Scaled variance, bias and median error of each method over
/// `scenario.replications` datasets per sample size.
pub fn run_variance_study(
    scenarios: &[ScenarioConfig],
    ns: &[usize],
    methods: &[Method],
    search: &SearchConfig,
) -> Result<VarianceTable> {
    if methods.iter().any(|m| *m == Method::SmoothedScore) {
        return Err(MonolocError::InvalidInput(
            "variance studies cover the score and least squares estimators".into(),
        ));
    }
    let mut rows = Vec::new();
    for sc in scenarios {
        sc.validate()?;
        let direction = sc.attenuation.direction();
        for &n in ns {
            let cell = sc.clone().with_n(n);
            let fits: Vec<Vec<Option<(Vec<f64>, bool)>>> = (0..sc.replications)
                .into_par_iter()
                .map(|r| {
                    let data = generate(&cell.clone().with_seed(replication_seed(&cell, r)));
                    methods
                        .iter()
                        .map(|&method| {
                            let data = data.as_ref().ok()?;
                            let spec = EstimatorSpec {
                                method,
                                direction,
                                config: search.clone(),
                                bandwidth: None,
                            };
                            spec.run(data).ok().map(|e| (e.theta, e.converged))
                        })
                        .collect()
                })
                .collect();
            for (k, &method) in methods.iter().enumerate() {
                let ok: Vec<&(Vec<f64>, bool)> = fits.iter().filter_map(|f| f[k].as_ref()).collect();
                let first: Vec<f64> = ok.iter().map(|(t, _)| t[0]).collect();
                let errs: Vec<f64> = ok
                    .iter()
                    .map(|(t, _)| {
                        t.iter()
                            .zip(&sc.theta0)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                rows.push(VarianceRow {
                    scenario: sc.label(),
                    n,
                    method,
                    replications: sc.replications,
                    failures: sc.replications - ok.len(),
                    non_converged: ok.iter().filter(|(_, c)| !c).count(),
                    scaled_variance: n as f64 * sample_variance(&first),
                    bias: first.iter().map(|t| t - sc.theta0[0]).sum::<f64>() / first.len() as f64,
                    median_abs_error: median(errs),
                    non_differentiable: !sc.attenuation.is_differentiable(),
                    estimates: ok.iter().map(|(t, _)| t.clone()).collect(),
                });
            }
        }
    }
    Ok(VarianceTable { rows })
}

/// Fraction of datasets whose normal bootstrap interval for the first
/// coordinate at `level` contains `theta0_1`.
pub fn run_coverage_study(
    scenarios: &[ScenarioConfig],
    ns: &[usize],
    spec: &CoverageSpec,
    level: f64,
) -> Result<CoverageTable> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MonolocError::InvalidInput(format!("level {level} outside (0, 1)")));
    }
    let mut rows = Vec::new();
    for sc in scenarios {
        sc.validate()?;
        let est = EstimatorSpec::ssce(sc.attenuation.direction(), spec.search.clone());
        for &n in ns {
            let cell = sc.clone().with_n(n);
            let m = ((n as f64).powf(spec.m_exponent).floor() as usize).clamp(1, n);
            // per dataset and method: Some((covered, width)) or None on failure
            let outcomes: Vec<Vec<Option<(bool, f64)>>> = (0..sc.replications)
                .into_par_iter()
                .map(|r| {
                    let seed = replication_seed(&cell, r);
                    let fit = generate(&cell.clone().with_seed(seed))
                        .and_then(|data| est.run(&data).map(|c| (data, c)));
                    spec.methods
                        .iter()
                        .map(|&method| {
                            let (data, center) = fit.as_ref().ok()?;
                            let bseed = mix64(seed, 1 + method as u64);
                            let summary = match method {
                                BootstrapMethod::MOutOfN => {
                                    bootstrap_m_of_n_at(data, &est, center, m, spec.replicates, bseed)
                                }
                                BootstrapMethod::Wild => bootstrap_wild_at(
                                    data,
                                    &est,
                                    center,
                                    spec.replicates,
                                    bseed,
                                    WildWeights::Mammen,
                                ),
                            }
                            .ok()?;
                            let (lo, hi) = summary.interval(0, level);
                            Some((lo <= sc.theta0[0] && sc.theta0[0] <= hi, hi - lo))
                        })
                        .collect()
                })
                .collect();
            for (k, &method) in spec.methods.iter().enumerate() {
                let ok: Vec<(bool, f64)> = outcomes.iter().filter_map(|o| o[k]).collect();
                let covered = ok.iter().filter(|(c, _)| *c).count();
                rows.push(CoverageRow {
                    scenario: sc.label(),
                    n,
                    method,
                    m: if method == BootstrapMethod::Wild { n } else { m },
                    level,
                    datasets: sc.replications,
                    failures: sc.replications - ok.len(),
                    covered,
                    coverage: covered as f64 / ok.len().max(1) as f64,
                    mean_width: ok.iter().map(|(_, w)| w).sum::<f64>() / ok.len().max(1) as f64,
                    non_differentiable: !sc.attenuation.is_differentiable(),
                });
            }
        }
    }
    Ok(CoverageTable { rows })
}

fn write_csv_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| MonolocError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct VarianceCsv<'a> {
    scenario: &'a str,
    n: usize,
    method: Method,
    replications: usize,
    failures: usize,
    non_converged: usize,
    scaled_variance: f64,
    bias: f64,
    median_abs_error: f64,
    non_differentiable: bool,
}

impl VarianceTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<VarianceCsv<'_>> = self
            .rows
            .iter()
            .map(|r| VarianceCsv {
                scenario: &r.scenario,
                n: r.n,
                method: r.method,
                replications: r.replications,
                failures: r.failures,
                non_converged: r.non_converged,
                scaled_variance: r.scaled_variance,
                bias: r.bias,
                median_abs_error: r.median_abs_error,
                non_differentiable: r.non_differentiable,
            })
            .collect();
        write_csv_rows(&rows, out)
    }

    pub fn save(&self, csv_path: &Path, json_path: Option<&Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        if let Some(p) = json_path {
            serde_json::to_writer_pretty(std::fs::File::create(p)?, self)?;
        }
        Ok(())
    }
}

impl CoverageTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv_rows(&self.rows, out)
    }

    pub fn save(&self, csv_path: &Path, json_path: Option<&Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        if let Some(p) = json_path {
            serde_json::to_writer_pretty(std::fs::File::create(p)?, self)?;
        }
        Ok(())
    }
}
