//! Location estimators: the simple score estimator (a zero crossing of the
//! profiled score, found as the minimizer of its norm), the profiled least
//! squares estimator, and a kernel-smoothed score variant.

mod lse;
pub(crate) mod search;
mod smoothed;
mod ssce;

use serde::{Deserialize, Serialize};

use crate::dataset::SensorDataset;
use crate::error::Result;
use crate::isotonic::{Direction, MonotoneStepFunction};

pub use lse::estimate_lse;
pub use smoothed::{
    default_bandwidth, estimate_smoothed_score, smoothed_derivative, smoothed_score, KERNEL_NORMALIZER,
};
pub use ssce::estimate_ssce;
pub(crate) use ssce::ssce_raw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ssce,
    Lse,
    SmoothedScore,
}

/// Derivative-free search settings.
///
/// `None` tolerances resolve against the data: `tol_objective` to
/// `1e-6 * sd(y) * spread(x)` and `tol_step` to `1e-4 * diameter(box)`;
/// `max_evals` to `5000 * d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub grid_points_per_dim: usize,
    pub multistarts: usize,
    pub max_evals: Option<usize>,
    pub tol_objective: Option<f64>,
    pub tol_step: Option<f64>,
    pub seed: u64,
    /// Keep every evaluated point in [`LocationEstimate::trace`].
    pub trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_points_per_dim: 21,
            multistarts: 8,
            max_evals: None,
            tol_objective: None,
            tol_step: None,
            seed: 0,
            trace: false,
        }
    }
}

impl SearchConfig {
    /// Smaller grid and fewer restarts, for resampling loops.
    pub fn light() -> Self {
        Self {
            grid_points_per_dim: 9,
            multistarts: 3,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub sse: f64,
    pub ordering_hash: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEstimate {
    pub theta: Vec<f64>,
    /// Attenuation refit at `theta`.
    pub eta: MonotoneStepFunction,
    pub method: Method,
    /// Score norm for score-type methods, SSE for the LSE.
    pub objective_at_solution: f64,
    pub direction: Direction,
    pub evaluations: usize,
    pub converged: bool,
    /// Every score component changes sign among the axis neighbours of
    /// `theta` at some radius up to `32 * tol_step`.
    pub certified_crossing: bool,
    /// Smallest radius (world units) at which the crossing was seen.
    #[serde(default)]
    pub certification_radius: Option<f64>,
    pub sse: f64,
    /// Normalized score at `theta` (world axes).
    pub score: Vec<f64>,
    /// Fitted attenuation at each sensor.
    pub fitted: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<TracePoint>>,
}

/// Which estimator to run, with its settings. Used by resampling and
/// simulation code to re-run an estimator on derived data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub method: Method,
    pub direction: Direction,
    #[serde(default)]
    pub config: SearchConfig,
    /// Bandwidth for the smoothed score; `None` uses [`default_bandwidth`].
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

impl EstimatorSpec {
    pub fn ssce(direction: Direction, config: SearchConfig) -> Self {
        Self {
            method: Method::Ssce,
            direction,
            config,
            bandwidth: None,
        }
    }

    pub fn lse(direction: Direction, config: SearchConfig) -> Self {
        Self {
            method: Method::Lse,
            direction,
            config,
            bandwidth: None,
        }
    }

    pub fn run(&self, data: &SensorDataset) -> Result<LocationEstimate> {
        self.run_with(data, &self.config)
    }

    pub fn run_with(&self, data: &SensorDataset, config: &SearchConfig) -> Result<LocationEstimate> {
        match self.method {
            Method::Ssce => estimate_ssce(data, self.direction, config),
            Method::Lse => estimate_lse(data, self.direction, config),
            Method::SmoothedScore => {
                let h = self.bandwidth.unwrap_or_else(|| default_bandwidth(data));
                estimate_smoothed_score(data, self.direction, h, config)
            }
        }
    }
}

/// Both directional SSCE fits and the one with the smaller SSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionChoice {
    pub chosen: LocationEstimate,
    pub sse_non_increasing: f64,
    pub sse_non_decreasing: f64,
}

impl DirectionChoice {
    pub fn sse_of(&self, direction: Direction) -> f64 {
        match direction {
            Direction::NonIncreasing => self.sse_non_increasing,
            Direction::NonDecreasing => self.sse_non_decreasing,
        }
    }
}

/// Fit the SSCE under both monotone directions and keep the fit with the
/// smaller squared error at its own estimate. Ties go to non-increasing.
pub fn select_direction(data: &SensorDataset, config: &SearchConfig) -> Result<DirectionChoice> {
    let dec = ssce_raw(data, Direction::NonIncreasing, config)?;
    let inc = ssce_raw(data, Direction::NonDecreasing, config)?;
    let (sse_non_increasing, sse_non_decreasing) = (dec.sse, inc.sse);
    let chosen = if inc.sse < dec.sse { inc } else { dec };
    Ok(DirectionChoice {
        chosen,
        sse_non_increasing,
        sse_non_decreasing,
    })
}
