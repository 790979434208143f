//! Learning algorithms: SPSA, rollout, clipped-surrogate policy gradient and
//! fictitious play.

pub mod curve;
pub mod fictitious;
pub mod net;
pub mod ppo;
pub mod rollout;
pub mod spsa;

use thiserror::Error;

use crate::decision::DecisionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("invalid learner parameters: {0}")]
    InvalidParams(String),
    #[error("objective returned a non-finite value at iteration {step}")]
    NonFinite { step: usize },
    #[error("non-finite loss during update {update}")]
    NonFiniteLoss { update: usize },
    #[error(transparent)]
    Decision(#[from] DecisionError),
}
