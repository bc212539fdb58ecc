//! Localization of a point source from sensor readings that decay
//! monotonically, but otherwise arbitrarily, with squared distance.
//!
//! The attenuation profile is profiled out by isotonic regression and the
//! location is estimated by a score zero crossing, by least squares, or by a
//! kernel-smoothed score.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod frames;
pub mod inference;
pub mod isotonic;
pub mod profile;
pub mod simulation;

pub use dataset::{ParameterBox, SensorDataset};
pub use error::{MonolocError, Result};
pub use estimators::{
    estimate_lse, estimate_smoothed_score, estimate_ssce, select_direction, EstimatorSpec,
    LocationEstimate, Method, SearchConfig,
};
pub use isotonic::{pava, Direction, MonotoneStepFunction, WeightedSeries};
pub use profile::{profile_fit, ProfileEvaluation};
