//! One-step (or short open-loop) lookahead on top of a base strategy.
//!
//! The Monte-Carlo variant scores each candidate action prefix by simulating
//! from states drawn out of the current belief, then following the base
//! strategy for a truncated horizon. Sample `j` reuses the same random stream
//! for every candidate so the comparison is paired. The exact variant is one
//! policy-improvement step against the base's exact value function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LearningError;
use crate::decision::{
    advance_belief, evaluate_policy, induced_mdp, sample_index, sample_row, step, Belief, DecisionError,
    EpisodeOutcome, InfoState, ModelKernel, Player, StepOutcome, Strategy, VALUE_TOLERANCE,
};
use crate::{par, seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutParams {
    /// Steps simulated under the base strategy after the lookahead prefix.
    pub rollout_horizon: usize,
    /// Length of the enumerated action prefix.
    pub lookahead_horizon: usize,
    /// Simulated trajectories per candidate.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for RolloutParams {
    fn default() -> Self {
        Self { rollout_horizon: 20, lookahead_horizon: 1, mc_samples: 20, seed: 0 }
    }
}

impl RolloutParams {
    pub fn validate(&self, n_actions: usize) -> Result<(), LearningError> {
        if self.rollout_horizon == 0 || self.lookahead_horizon == 0 || self.mc_samples == 0 {
            return Err(LearningError::InvalidParams("rollout horizon, lookahead horizon and mc_samples must all be at least 1".into()));
        }
        let prefixes = (n_actions as f64).powi(self.lookahead_horizon as i32);
        if prefixes > 1e5 {
            return Err(LearningError::InvalidParams(format!("{prefixes} lookahead prefixes is too many")));
        }
        Ok(())
    }
}

/// Model, base strategy and the (fixed) attacker behavior.
#[derive(Clone, Copy, Debug)]
pub struct RolloutContext<'a> {
    pub kernel: &'a ModelKernel,
    pub base: &'a Strategy,
    pub attacker: &'a Strategy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RolloutChoice {
    pub action: usize,
    /// Estimated value of each first action (best over continuations).
    pub q: Vec<f64>,
}

fn prefix(mut code: usize, n: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(code % n);
        code /= n;
    }
    out
}

/// Discounted return of one simulated trajectory: play `prefix`, then the base.
fn simulate<R: Rng + ?Sized>(
    ctx: &RolloutContext<'_>,
    start: usize,
    belief: Option<&Belief>,
    prefix: &[usize],
    horizon: usize,
    rng: &mut R,
) -> Result<f64, DecisionError> {
    let k = ctx.kernel;
    let ns = k.n_states();
    let track = ctx.base.needs_belief() && !k.is_fully_observed();
    let mut belief = match (track, belief) {
        (true, Some(b)) => Some(b.clone()),
        (true, None) => Some(Belief::degenerate(ns, start)),
        _ => None,
    };
    let needs_obs = matches!(ctx.base, Strategy::ObservationLookup { .. });
    let mut state = start;
    let mut observation = None;
    let mut total = 0.0;
    let mut discount = 1.0;
    let mut one_hot = vec![0.0; ns];
    for t in 0..prefix.len() + horizon {
        if k.is_terminal(state) {
            break;
        }
        let d = match prefix.get(t) {
            Some(&d) => d,
            None => {
                let b: &[f64] = match &belief {
                    Some(b) => b.probs(),
                    None => {
                        one_hot.iter_mut().for_each(|x| *x = 0.0);
                        one_hot[state] = 1.0;
                        &one_hot
                    }
                };
                let info = InfoState { state: Some(state), belief: Some(b), observation };
                sample_index(&ctx.base.distribution(&info)?, rng)
            }
        };
        let a = sample_index(&ctx.attacker.at_state(state, ns)?, rng);
        let st = if belief.is_some() || needs_obs {
            step(k, state, d, a, rng)
        } else {
            // Observations are never read; skip sampling them.
            let next = sample_row(k.transition_row(state, d, a), rng);
            StepOutcome { next_state: next, observation: 0, reward: k.reward(state, d, a) }
        };
        total += discount * st.reward;
        discount *= k.discount();
        if let Some(b) = belief.as_mut() {
            *b = advance_belief(k, ctx.attacker, b, d, st.observation)?;
        }
        state = st.next_state;
        observation = Some(st.observation);
    }
    Ok(total)
}

/// Picks the defender action with the highest estimated value from `belief`
/// (a degenerate belief when the state is known). Ties go to the lowest index.
pub fn rollout_action(ctx: &RolloutContext<'_>, belief: &Belief, params: &RolloutParams) -> Result<RolloutChoice, LearningError> {
    let seed = params.seed;
    let n = ctx.kernel.n_defender_actions();
    params.validate(n)?;
    if belief.len() != ctx.kernel.n_states() {
        return Err(DecisionError::Shape(format!("belief of length {} for {} states", belief.len(), ctx.kernel.n_states())).into());
    }
    let n_prefix = n.pow(params.lookahead_horizon as u32);
    let prefixes: Vec<Vec<usize>> = (0..n_prefix).map(|c| prefix(c, n, params.lookahead_horizon)).collect();
    let means: Result<Vec<f64>, DecisionError> = par::map_indices(n_prefix, |c| {
        let mut acc = 0.0;
        for j in 0..params.mc_samples {
            let mut rng = seed::rng(seed::derive(seed, &[j as u64]));
            let start = sample_index(belief.probs(), &mut rng);
            acc += simulate(ctx, start, Some(belief), &prefixes[c], params.rollout_horizon, &mut rng)?;
        }
        Ok(acc / params.mc_samples as f64)
    })
    .into_iter()
    .collect();
    let means = means?;
    let mut q = vec![f64::NEG_INFINITY; n];
    for (c, m) in means.iter().enumerate() {
        let first = prefixes[c][0];
        if *m > q[first] {
            q[first] = *m;
        }
    }
    let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let action = q.iter().position(|&v| v >= best).unwrap_or(0);
    Ok(RolloutChoice { action, q })
}

/// Runs one episode in which the defender tracks the exact belief and acts by
/// [`rollout_action`] at every step. The episode draws from `params.seed`.
pub fn rollout_episode(ctx: &RolloutContext<'_>, params: &RolloutParams, horizon: usize) -> Result<EpisodeOutcome, LearningError> {
    let episode_seed = params.seed;
    let k = ctx.kernel;
    let ns = k.n_states();
    let mut rng = seed::rng(seed::derive(episode_seed, &[seed::stream::EVAL]));
    let mut belief = Belief::new(k.initial_belief().to_vec())?;
    let mut state = sample_index(k.initial_belief(), &mut rng);
    let mut out = EpisodeOutcome { discounted_return: 0.0, total_reward: 0.0, steps: 0, terminated: k.is_terminal(state) };
    let mut discount = 1.0;
    while out.steps < horizon && !out.terminated {
        let decision_seed = seed::derive(episode_seed, &[seed::stream::TRAIN, out.steps as u64]);
        let d = rollout_action(ctx, &belief, &RolloutParams { seed: decision_seed, ..params.clone() })?.action;
        let a = sample_index(&ctx.attacker.at_state(state, ns)?, &mut rng);
        let st = step(k, state, d, a, &mut rng);
        out.discounted_return += discount * st.reward;
        out.total_reward += st.reward;
        discount *= k.discount();
        out.steps += 1;
        belief = if k.is_fully_observed() {
            Belief::degenerate(ns, st.next_state)
        } else {
            advance_belief(k, ctx.attacker, &belief, d, st.observation)?
        };
        state = st.next_state;
        out.terminated = k.is_terminal(state);
    }
    Ok(out)
}

/// Exact rollout policy on the underlying state: greedy with respect to the
/// base value after `lookahead - 1` Bellman optimality backups.
pub fn rollout_policy_exact(ctx: &RolloutContext<'_>, lookahead: usize) -> Result<Strategy, LearningError> {
    if lookahead == 0 {
        return Err(LearningError::InvalidParams("lookahead must be at least 1".into()));
    }
    let k = ctx.kernel;
    let mut values = evaluate_policy(k, ctx.base, ctx.attacker, VALUE_TOLERANCE)?;
    let mdp = induced_mdp(k, ctx.attacker, Player::Defender)?;
    let q = |v: &[f64], s: usize, x: usize| {
        let i = s * mdp.n_actions + x;
        mdp.reward[i] + mdp.discount * mdp.rows[i].iter().map(|&(t, p)| p * v[t]).sum::<f64>()
    };
    for _ in 1..lookahead {
        values = (0..mdp.n_states)
            .map(|s| (0..mdp.n_actions).map(|x| q(&values, s, x)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
    }
    let policy: Vec<usize> = (0..mdp.n_states)
        .map(|s| {
            let qs: Vec<f64> = (0..mdp.n_actions).map(|x| q(&values, s, x)).collect();
            let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            qs.iter().position(|&v| v >= best - 1e-12 * (1.0 + best.abs())).unwrap_or(0)
        })
        .collect();
    Ok(Strategy::pure(&policy, mdp.n_actions))
}
