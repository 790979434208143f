//! Observation-model identification from labeled alert traces.

mod empirical;
mod gmm;
mod trace;

pub use empirical::{fit_empirical, Categorical};
pub use gmm::{discretize_mixture, fit_gmm, log_normal_cdf, Component, GmmFit, MixtureModel};
pub use trace::{ingest_traces, parse_csv, parse_json_lines, Channel, Trace, TraceFormat, TraceRecord};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SysidError {
    #[error("cannot read {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("line {line}: {detail}")]
    FileFormat { line: usize, detail: String },
    #[error("line {line}: field `{field}` is negative")]
    NegativeCount { line: usize, field: &'static str },
    #[error("no records carry label {label}")]
    EmptyStratum { label: u8 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid mixture: {0}")]
    InvalidModel(String),
}
