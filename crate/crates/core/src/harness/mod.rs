//! Experiment configuration, synthetic data and run orchestration.

pub mod config;
pub mod dataset;
pub mod run;
pub mod synth;

pub use config::{ExperimentConfig, Task, Variance};
pub use dataset::write_dataset;
pub use run::{evaluate_checkpoint, run_experiment, MetricsTable, RunSummary, BUILD_ID};
