//! Synthetic sensor data and the Monte Carlo studies built on it.

mod spec;
mod study;

pub use spec::{
    generate, table2_grid, AttenuationSpec, BetaSign, CovariateSpec, CustomAttenuation, ErrorBase,
    ErrorSpec, ScenarioConfig,
};
pub use study::{
    replication_seed, run_coverage_study, run_variance_study, CoverageRow, CoverageSpec,
    CoverageTable, VarianceRow, VarianceTable,
};
