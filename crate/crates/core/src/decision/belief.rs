use serde::{Deserialize, Serialize};

use super::{DecisionError, ModelKernel, STOCHASTIC_TOLERANCE};

/// Probability vector over states: the defender's information state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self, DecisionError> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DecisionError::InvalidBelief("entries must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(DecisionError::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn degenerate(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Total probability of the given states.
    pub fn mass(&self, states: &[usize]) -> f64 {
        states.iter().map(|&s| self.probs[s]).sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// One-step prediction `Σ_s b(s) Σ_a π_A(a|s) f(s'|s,d,a)`.
pub fn predict<F>(belief: &[f64], defender_action: usize, kernel: &ModelKernel, mut attacker_at: F) -> Result<Vec<f64>, DecisionError>
where
    F: FnMut(usize) -> Result<Vec<f64>, DecisionError>,
{
    let ns = kernel.n_states();
    if belief.len() != ns {
        return Err(DecisionError::Shape(format!("belief has {} entries, kernel has {ns} states", belief.len())));
    }
    if defender_action >= kernel.n_defender_actions() {
        return Err(DecisionError::Shape(format!("defender action {defender_action} out of range")));
    }
    let mut out = vec![0.0; ns];
    for (s, &bs) in belief.iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        let marginal = attacker_at(s)?;
        if marginal.len() != kernel.n_attacker_actions() {
            return Err(DecisionError::Shape("opponent distribution has wrong length".into()));
        }
        for (a, &pa) in marginal.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let w = bs * pa;
            for &(next, p) in kernel.transition_row(s, defender_action, a) {
                out[next] += w * p;
            }
        }
    }
    Ok(out)
}

fn condition(mut predicted: Vec<f64>, observation: usize, kernel: &ModelKernel) -> Result<Belief, DecisionError> {
    if observation >= kernel.n_observations() {
        return Err(DecisionError::Shape(format!("observation {observation} out of range")));
    }
    let mut total = 0.0;
    for (s, p) in predicted.iter_mut().enumerate() {
        *p *= kernel.observation_prob(s, observation);
        total += *p;
    }
    if !(total > 0.0) {
        return Err(DecisionError::ZeroLikelihood { observation });
    }
    for p in predicted.iter_mut() {
        *p /= total;
    }
    Ok(Belief { probs: predicted })
}

/// Bayes filter step with a state-independent opponent action marginal:
/// predict through `f`, condition on `z(o | s')`, normalize.
pub fn belief_update(
    belief: &Belief,
    defender_action: usize,
    observation: usize,
    kernel: &ModelKernel,
    opponent_marginal: &[f64],
) -> Result<Belief, DecisionError> {
    let predicted = predict(belief.probs(), defender_action, kernel, |_| Ok(opponent_marginal.to_vec()))?;
    condition(predicted, observation, kernel)
}

/// Bayes filter step where the attacker's action distribution depends on the
/// (hidden) state, e.g. a tabular attacker strategy.
pub fn belief_update_with<F>(
    belief: &Belief,
    defender_action: usize,
    observation: usize,
    kernel: &ModelKernel,
    attacker_at: F,
) -> Result<Belief, DecisionError>
where
    F: FnMut(usize) -> Result<Vec<f64>, DecisionError>,
{
    let predicted = predict(belief.probs(), defender_action, kernel, attacker_at)?;
    condition(predicted, observation, kernel)
}
