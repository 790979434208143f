//! Experiment configs, seeded runs and their CSV/JSON artifacts.
//!
//! A run writes `config.json` (the resolved config), one `seed_<s>.csv`
//! learning curve per seed, `aggregate.csv` (mean and stddev across seeds)
//! and `summary.json` into the output directory. If anything fails the files
//! written so far are removed again.

pub mod baselines;
mod config;
mod run;

pub use config::{
    expected_algorithm, parse_config, parse_sweep_config, AlgorithmKind, AlgorithmParams, ExperimentConfig, ModelKind,
    ModelParams, SweepConfig,
};
pub(crate) use config::parse_model;
pub(crate) use run::build_model;
pub use run::{aggregate, run_experiment, run_sweep, AggregateRow, RunOptions, RunSummary, SweepSummary};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config error at `{path}`: {detail}")]
pub struct ConfigError {
    /// Dotted path of the offending field (empty for the document itself).
    pub path: String,
    pub detail: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { path: path.into(), detail: detail.into() }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("run failed: {0}")]
    Runtime(String),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}
