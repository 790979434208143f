//! Fictitious play with pluggable best-response oracles.
//!
//! Each round both players respond to the opponent's current average, then
//! the averages absorb the responses with weight `1/t` state by state. The
//! initial averages are uniform and are replaced entirely in round 1.

use serde::{Deserialize, Serialize};

use super::ppo::{pg_train_from, FeatureChoice, PgParams};
use super::spsa::{spsa_optimize, SpsaParams};
use super::LearningError;
use crate::decision::{
    best_response, evaluate_policy, exploitability_report, policy_value_from, DecisionError, ModelKernel, Player,
    Strategy, VALUE_TOLERANCE,
};
use crate::learning::net::PolicyNet;
use crate::seed;

/// Above this many states `auto` switches from exact DP to policy gradient.
pub const EXACT_STATE_LIMIT: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponderKind {
    Auto,
    Exact,
    /// SPSA over per-state action logits, scored by exact evaluation.
    Spsa,
    Pg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpParams {
    pub rounds: usize,
    pub responder: ResponderKind,
    pub spsa: SpsaParams,
    pub pg: PgParams,
    /// Exploitability is recorded every this many rounds and after the last.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for FpParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            responder: ResponderKind::Auto,
            spsa: SpsaParams { iterations: 200, ..SpsaParams::default() },
            pg: PgParams { updates: 5, eval_episodes: 20, ..PgParams::default() },
            eval_every: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FpPoint {
    pub round: usize,
    /// Wall-clock time since the first round started; not reproducible.
    pub elapsed_seconds: f64,
    pub value: f64,
    pub br_gain_defender: f64,
    pub br_gain_attacker: f64,
    pub exploitability: f64,
}

#[derive(Clone, Debug)]
pub struct FpResult {
    pub defender: Strategy,
    pub attacker: Strategy,
    pub curve: Vec<FpPoint>,
}

/// Per-player memory carried between rounds (warm starts).
#[derive(Default)]
struct Warm {
    logits: Option<Vec<f64>>,
    net: Option<PolicyNet>,
}

fn softmax_table(theta: &[f64], ns: usize, na: usize) -> Vec<Vec<f64>> {
    (0..ns)
        .map(|s| {
            let z = &theta[s * na..(s + 1) * na];
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = e.iter().sum();
            e.into_iter().map(|v| v / sum).collect()
        })
        .collect()
}

fn value_for(kernel: &ModelKernel, mine: &Strategy, opponent: &Strategy, player: Player) -> Result<f64, DecisionError> {
    let (d, a, sign) = match player {
        Player::Defender => (mine, opponent, 1.0),
        Player::Attacker => (opponent, mine, -1.0),
    };
    let j = evaluate_policy(kernel, d, a, VALUE_TOLERANCE)?;
    Ok(sign * policy_value_from(kernel, &j))
}

fn respond(
    kernel: &ModelKernel,
    opponent: &Strategy,
    player: Player,
    kind: ResponderKind,
    params: &FpParams,
    round: usize,
    warm: &mut Warm,
) -> Result<Vec<Vec<f64>>, LearningError> {
    let ns = kernel.n_states();
    let na = match player {
        Player::Defender => kernel.n_defender_actions(),
        Player::Attacker => kernel.n_attacker_actions(),
    };
    let player_tag = match player {
        Player::Defender => 0,
        Player::Attacker => 1,
    };
    let round_seed = seed::derive(params.seed, &[round as u64, player_tag]);
    match kind {
        ResponderKind::Auto => {
            let kind = if ns <= EXACT_STATE_LIMIT { ResponderKind::Exact } else { ResponderKind::Pg };
            respond(kernel, opponent, player, kind, params, round, warm)
        }
        ResponderKind::Exact => Ok(best_response(kernel, opponent, player, VALUE_TOLERANCE)?.strategy.state_table(ns)?),
        ResponderKind::Spsa => {
            let theta0 = warm.logits.clone().unwrap_or_else(|| vec![0.0; ns * na]);
            let spsa = SpsaParams { seed: round_seed, ..params.spsa.clone() };
            let out = spsa_optimize(
                |theta, _| {
                    let s = Strategy::Tabular { probs: softmax_table(theta, ns, na) };
                    Ok(value_for(kernel, &s, opponent, player)?)
                },
                &theta0,
                (-10.0, 10.0),
                &spsa,
            )?;
            let table = softmax_table(&out.theta, ns, na);
            warm.logits = Some(out.theta);
            Ok(table)
        }
        ResponderKind::Pg => {
            let pg = PgParams { seed: round_seed, features: FeatureChoice::State, ..params.pg.clone() };
            let out = pg_train_from(kernel, opponent, player, &pg, warm.net.take())?;
            if let Strategy::Parametric { net } = &out.strategy {
                warm.net = Some(net.clone());
            }
            Ok(out.strategy.state_table(ns)?)
        }
    }
}

fn absorb(avg: &mut [Vec<f64>], br: &[Vec<f64>], t: usize) {
    let w = 1.0 / t as f64;
    for (row, new) in avg.iter_mut().zip(br) {
        for (p, q) in row.iter_mut().zip(new) {
            *p += w * (q - *p);
        }
    }
}

pub fn fictitious_play(kernel: &ModelKernel, params: &FpParams) -> Result<FpResult, LearningError> {
    if params.rounds == 0 || params.eval_every == 0 {
        return Err(LearningError::InvalidParams("rounds and eval_every must be positive".into()));
    }
    let ns = kernel.n_states();
    let mut avg_d = vec![vec![1.0 / kernel.n_defender_actions() as f64; kernel.n_defender_actions()]; ns];
    let mut avg_a = vec![vec![1.0 / kernel.n_attacker_actions() as f64; kernel.n_attacker_actions()]; ns];
    let mut warm_d = Warm::default();
    let mut warm_a = Warm::default();
    let started = std::time::Instant::now();
    let mut curve = Vec::new();
    for round in 1..=params.rounds {
        let cur_d = Strategy::Tabular { probs: avg_d.clone() };
        let cur_a = Strategy::Tabular { probs: avg_a.clone() };
        let br_d = respond(kernel, &cur_a, Player::Defender, params.responder, params, round, &mut warm_d)?;
        let br_a = respond(kernel, &cur_d, Player::Attacker, params.responder, params, round, &mut warm_a)?;
        absorb(&mut avg_d, &br_d, round);
        absorb(&mut avg_a, &br_a, round);
        if round % params.eval_every == 0 || round == params.rounds || round == 1 {
            let r = exploitability_report(kernel, &Strategy::Tabular { probs: avg_d.clone() }, &Strategy::Tabular { probs: avg_a.clone() })?;
            curve.push(FpPoint {
                round,
                elapsed_seconds: started.elapsed().as_secs_f64(),
                value: r.value,
                br_gain_defender: r.br_gain_defender,
                br_gain_attacker: r.br_gain_attacker,
                exploitability: r.exploitability,
            });
        }
    }
    Ok(FpResult { defender: Strategy::Tabular { probs: avg_d }, attacker: Strategy::Tabular { probs: avg_a }, curve })
}
