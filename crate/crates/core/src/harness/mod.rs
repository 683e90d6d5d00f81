//! Experiment driver: data ingestion and preprocessing, the sampler sweep,
//! aggregation and plot-ready output.

pub mod data;
pub mod experiment;
pub mod report;

pub use data::{load_csv, make_synthetic, parse_csv, preprocess, SyntheticSpec, DEFAULT_TRIM};
pub use experiment::{
    run_experiment, run_on_points, DataSource, ExperimentConfig, ExperimentOutcome, OptSummary, RunFailure,
    RunRecord, SkippedCell,
};
pub use report::{aggregate, quantile, write_outputs, RunMetadata, SummaryRow};
