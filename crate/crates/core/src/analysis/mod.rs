//! Model-misspecification bound and the sensitivity sweep.

mod misspec;
mod sweep;

pub use misspec::{bound_check, misspecification_bound, total_variation_alpha, MisspecReport};
pub use sweep::{sensitivity_sweep, spearman, sweep_to_csv, SweepRow};

use thiserror::Error;

use crate::decision::DecisionError;
use crate::learning::LearningError;
use crate::usecase::UsecaseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("the two kernels carry different reward tables")]
    RewardMismatch,
    #[error("discount must lie in [0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Usecase(#[from] UsecaseError),
}
