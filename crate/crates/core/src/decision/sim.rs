//! Seeded episode simulation and Monte-Carlo value estimates.

use rand::Rng;
use serde::Serialize;

use super::{belief_update_with, predict, Belief, DecisionError, InfoState, ModelKernel, Strategy};
use crate::{par, seed};

/// Inverse-CDF draw from a probability vector. Rounding slack at the top end
/// falls back to the last positive entry.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn sample_row<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(s, p) in row {
        acc += p;
        if u < acc {
            return s;
        }
    }
    row.last().map_or(0, |&(s, _)| s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepOutcome {
    pub next_state: usize,
    pub observation: usize,
    pub reward: f64,
}

/// One transition: reward `r(s, d, a)`, successor from `f`, observation from `z`.
pub fn step<R: Rng + ?Sized>(kernel: &ModelKernel, s: usize, d: usize, a: usize, rng: &mut R) -> StepOutcome {
    let next_state = sample_row(kernel.transition_row(s, d, a), rng);
    let observation = sample_index(kernel.observation_row(next_state), rng);
    StepOutcome { next_state, observation, reward: kernel.reward(s, d, a) }
}

/// Everything needed to simulate one episode. The defender is handed the
/// true state, its belief (only maintained when the strategy needs one) and
/// the latest observation; each strategy reads the parts it is defined on.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeSpec<'a> {
    pub kernel: &'a ModelKernel,
    pub defender: &'a Strategy,
    pub attacker: &'a Strategy,
    /// Truncation length; episodes also stop on reaching the terminal state.
    pub horizon: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub discounted_return: f64,
    pub total_reward: f64,
    pub steps: usize,
    pub terminated: bool,
}

/// Bayes step that falls back to the prediction when the observation has
/// vanishing likelihood (only possible through floating-point underflow).
pub(crate) fn advance_belief(
    kernel: &ModelKernel,
    attacker: &Strategy,
    belief: &Belief,
    d: usize,
    o: usize,
) -> Result<Belief, DecisionError> {
    let ns = kernel.n_states();
    match belief_update_with(belief, d, o, kernel, |s| attacker.at_state(s, ns)) {
        Err(DecisionError::ZeroLikelihood { .. }) => {
            let predicted = predict(belief.probs(), d, kernel, |s| attacker.at_state(s, ns))?;
            let total: f64 = predicted.iter().sum();
            Belief::new(predicted.into_iter().map(|p| p / total).collect())
        }
        other => other,
    }
}

pub fn run_episode<R: Rng + ?Sized>(spec: &EpisodeSpec<'_>, rng: &mut R) -> Result<EpisodeOutcome, DecisionError> {
    let kernel = spec.kernel;
    let ns = kernel.n_states();
    let track_belief = spec.defender.needs_belief() && !kernel.is_fully_observed();
    let mut belief = Belief::new(kernel.initial_belief().to_vec())?;
    let mut state = sample_index(kernel.initial_belief(), rng);
    let mut observation = None;
    let mut out = EpisodeOutcome { discounted_return: 0.0, total_reward: 0.0, steps: 0, terminated: kernel.is_terminal(state) };
    let mut discount = 1.0;
    let mut one_hot = vec![0.0; ns];
    while out.steps < spec.horizon && !out.terminated {
        let b: &[f64] = if track_belief {
            belief.probs()
        } else {
            one_hot.iter_mut().for_each(|x| *x = 0.0);
            one_hot[state] = 1.0;
            &one_hot
        };
        let info = InfoState { state: Some(state), belief: Some(b), observation };
        let d = sample_index(&spec.defender.distribution(&info)?, rng);
        let a = sample_index(&spec.attacker.at_state(state, ns)?, rng);
        let st = step(kernel, state, d, a, rng);
        out.discounted_return += discount * st.reward;
        out.total_reward += st.reward;
        discount *= kernel.discount();
        out.steps += 1;
        if track_belief {
            belief = advance_belief(kernel, spec.attacker, &belief, d, st.observation)?;
        }
        state = st.next_state;
        observation = Some(st.observation);
        out.terminated = kernel.is_terminal(state);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stddev: f64,
    pub episodes: usize,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, stddev: f64::NAN, episodes: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, stddev: var.sqrt(), episodes: n }
    }

    pub fn stderr(&self) -> f64 {
        self.stddev / (self.episodes as f64).sqrt()
    }
}

/// Mean discounted return over `episodes` runs. Episode `i` draws from its
/// own stream derived from `(seed, i)`, so the result does not depend on
/// whether the episodes run in parallel.
pub fn monte_carlo_value(spec: &EpisodeSpec<'_>, episodes: usize, base_seed: u64) -> Result<McEstimate, DecisionError> {
    let returns: Result<Vec<f64>, DecisionError> = par::map_indices(episodes, |i| {
        let mut rng = seed::rng(seed::derive(base_seed, &[i as u64]));
        run_episode(spec, &mut rng).map(|o| o.discounted_return)
    })
    .into_iter()
    .collect();
    Ok(McEstimate::from_samples(&returns?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_index_respects_zero_entries() {
        let mut rng = seed::rng(1);
        for _ in 0..1000 {
            assert_ne!(sample_index(&[0.5, 0.0, 0.5], &mut rng), 1);
        }
    }

    #[test]
    fn sample_index_frequencies() {
        let mut rng = seed::rng(2);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[sample_index(&[0.2, 0.3, 0.5], &mut rng)] += 1;
        }
        assert!((counts[0] as f64 / 30_000.0 - 0.2).abs() < 0.01);
        assert!((counts[2] as f64 / 30_000.0 - 0.5).abs() < 0.01);
    }
}
