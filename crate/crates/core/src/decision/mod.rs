//! Generic finite MDP / POMDP / zero-sum Markov game machinery: kernels,
//! belief filtering, policy evaluation, exact best response and exploitability.

mod belief;
mod kernel;
mod sim;
mod solve;
mod strategy;

pub use belief::{belief_update, belief_update_with, predict, Belief};
pub use kernel::{
    identity_observation, validate_kernel, KernelDocument, KernelParts, ModelKernel, Row, ValidationReport,
    Violation, STOCHASTIC_TOLERANCE,
};
pub use sim::{
    monte_carlo_value, run_episode, sample_index, sample_row, step, EpisodeOutcome, EpisodeSpec, McEstimate,
    StepOutcome,
};
pub use solve::{
    best_response, evaluate_policy, evaluate_policy_with, evaluation_residuals, exploitability,
    exploitability_report, induced_chain, induced_mdp, policy_value_from, BestResponse, EvalMethod, EvalOptions,
    ExploitabilityReport, InducedMdp, Player, VALUE_TOLERANCE,
};
pub use strategy::{InfoState, Strategy};
pub(crate) use sim::advance_belief;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("observation {observation} has zero likelihood under the predicted belief")]
    ZeroLikelihood { observation: usize },
    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("strategy needs {0}, which is not available in this information state")]
    MissingInformation(&'static str),
    #[error("discount must lie in [0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("linear solve failed: {0}")]
    Singular(String),
}
