//! Confidence regions for the source location: m-out-of-n and wild
//! bootstrap, normal-approximation ellipsoids, and a Monte Carlo oracle for
//! the asymptotic covariance of the score estimator.

mod asymptotic;
mod bootstrap;
mod ellipsoid;

pub use asymptotic::{asymptotic_covariance_oracle, AsymptoticCovariance, TruthSpec};
pub use bootstrap::{
    bootstrap_m_of_n, bootstrap_m_of_n_at, bootstrap_wild, bootstrap_wild_at, default_m, mammen_weight,
    mix64, BootstrapMethod, BootstrapSummary, WildWeights, DEFAULT_LEVELS, MAMMEN_HIGH, MAMMEN_LOW,
    MAMMEN_P_LOW,
};
pub use ellipsoid::{chi2_quantile, normal_ellipsoid, Ellipsoid};
