//! Experiment runner for `irregflow-core`: JSON configuration, parallel
//! Monte Carlo drivers with thread-count independent results, and the
//! `manifest.json` / `results.csv` / `summary.txt` artifacts.

pub mod config;
pub mod experiments;
pub mod output;
pub mod parallel;

use std::path::PathBuf;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{run_experiment, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(#[from] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] irregflow_core::Error),
    #[error("config names experiment `{config}` but `{cli}` was requested")]
    ExperimentMismatch { config: &'static str, cli: &'static str },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Plan(String),
}
