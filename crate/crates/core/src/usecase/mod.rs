//! Builders for the six security models: flow-control POMDP and game,
//! network segmentation game, replication MDP and game, recovery POMDP.

pub mod flow;
pub mod obs;
pub mod recovery;
pub mod replication;
pub mod segmentation;

use thiserror::Error;

use crate::decision::DecisionError;
use crate::sysid::SysidError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UsecaseError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{what} = {value} exceeds the cap of {cap}")]
    DimensionCap { what: &'static str, value: usize, cap: usize },
    #[error("file format: {0}")]
    FileFormat(String),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Sysid(#[from] SysidError),
}

pub(crate) fn invalid(msg: impl Into<String>) -> UsecaseError {
    UsecaseError::InvalidConfig(msg.into())
}

pub(crate) fn check_distribution(name: &str, row: &[f64]) -> Result<(), UsecaseError> {
    let sum: f64 = row.iter().sum();
    if row.is_empty() || row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("{name} is not a probability vector")));
    }
    Ok(())
}

pub(crate) fn check_discount(gamma: f64) -> Result<(), UsecaseError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}
