//! Metrics, experiment configuration and the replicated experiment runner.

mod config;
mod metrics;
mod report;
mod runner;

pub use config::{EnvConfig, ExperimentConfig, MethodId, WeightEstimator};
pub use metrics::{
    conditional_coverage_diagnostic, coverage, mean_length, per_label_coverage, BinCoverage,
    LengthSummary,
};
pub use report::{CellFailure, Report, SeedRow, SummaryRow, REPORT_SCHEMA};
pub use runner::run_experiment;
