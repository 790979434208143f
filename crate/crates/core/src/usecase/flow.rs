//! Flow-control models.
//!
//! The stops-remaining counter `l` is part of the state, so states are
//! `(s, l)` for `s ∈ {0, 1}` (no intrusion / intrusion) and `l ∈ 1..=L`,
//! followed by the terminal state. State `(s, l)` has index `2(l-1) + s`.
//! Actions are `continue` (0) and `stop` (1) for both players.
//!
//! Reward constants other than `p` and `gamma` are free parameters with no
//! published values; the defaults are illustrative.

use serde::{Deserialize, Serialize};

use super::obs::ObservationSpec;
use super::{check_discount, invalid, UsecaseError};
use crate::decision::{KernelParts, ModelKernel, Row, Strategy};

pub const CONTINUE: usize = 0;
pub const STOP: usize = 1;

pub fn state_index(s: usize, l: usize) -> usize {
    2 * (l - 1) + s
}

pub fn terminal_index(stops: usize) -> usize {
    2 * stops
}

/// Indices of the intrusion states `(1, l)`.
pub fn intrusion_states(stops: usize) -> Vec<usize> {
    (1..=stops).map(|l| state_index(1, l)).collect()
}

fn state_names(stops: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(2 * stops + 1);
    for l in 1..=stops {
        names.push(format!("s0_l{l}"));
        names.push(format!("s1_l{l}"));
    }
    names.push("terminal".into());
    names
}

fn two_actions() -> Vec<String> {
    vec!["continue".into(), "stop".into()]
}

/// Decodes a non-terminal state index into `(s, l)`.
pub fn decode_state(index: usize) -> (usize, usize) {
    (index % 2, index / 2 + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowPomdpConfig {
    #[serde(rename = "L")]
    pub stops: usize,
    pub p: f64,
    pub r_st: f64,
    pub r_sla: f64,
    pub r_int: f64,
    pub obs: ObservationSpec,
    pub gamma: f64,
}

impl Default for FlowPomdpConfig {
    fn default() -> Self {
        Self { stops: 3, p: 0.01, r_st: 5.0, r_sla: 1.0, r_int: -10.0, obs: ObservationSpec::pomdp_default(), gamma: 0.99 }
    }
}

impl FlowPomdpConfig {
    pub fn validate(&self) -> Result<(), UsecaseError> {
        if self.stops < 1 {
            return Err(invalid("L must be at least 1"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(invalid(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.r_st > 0.0) {
            return Err(invalid("r_st must be positive"));
        }
        if !(self.r_sla > 0.0) {
            return Err(invalid("r_sla must be positive"));
        }
        if !(self.r_int < 0.0) {
            return Err(invalid("r_int must be negative"));
        }
        check_discount(self.gamma)
    }
}

fn observation_parts(spec: &ObservationSpec, n_states: usize) -> Result<(Vec<String>, Vec<f64>), UsecaseError> {
    let table = spec.resolve()?;
    let mut flat = Vec::with_capacity(n_states * table.labels.len());
    for idx in 0..n_states {
        // The terminal state reuses the no-intrusion row.
        let s = if idx + 1 == n_states { 0 } else { idx % 2 };
        flat.extend_from_slice(&table.rows[s]);
    }
    Ok((table.labels, flat))
}

/// Single-agent flow POMDP: the attacker's intrusion start is a Bernoulli(p)
/// process, the defender decides when to spend its `L` stops.
pub fn build_flow_pomdp(cfg: &FlowPomdpConfig) -> Result<ModelKernel, UsecaseError> {
    cfg.validate()?;
    let big_l = cfg.stops;
    let term = terminal_index(big_l);
    let n = term + 1;
    let mut transition: Vec<Row> = Vec::with_capacity(n * 2);
    let mut reward = Vec::with_capacity(n * 2);
    for idx in 0..n {
        for d in [CONTINUE, STOP] {
            if idx == term {
                transition.push(vec![(term, 1.0)]);
                reward.push(0.0);
                continue;
            }
            let (s, l) = decode_state(idx);
            let row = if l == 1 && d == STOP {
                vec![(term, 1.0)]
            } else {
                let next_l = l - d;
                if s == 0 {
                    vec![(state_index(0, next_l), 1.0 - cfg.p), (state_index(1, next_l), cfg.p)]
                } else {
                    vec![(state_index(1, next_l), 1.0)]
                }
            };
            transition.push(row);
            let sf = s as f64;
            reward.push(if d == CONTINUE { cfg.r_sla + sf * cfg.r_int / big_l as f64 } else { sf * cfg.r_st / big_l as f64 });
        }
    }
    let (observations, observation) = observation_parts(&cfg.obs, n)?;
    let mut initial_belief = vec![0.0; n];
    initial_belief[state_index(0, big_l)] = 1.0;
    Ok(ModelKernel::new(KernelParts {
        name: "flow-pomdp".into(),
        states: state_names(big_l),
        defender_actions: two_actions(),
        attacker_actions: vec!["null".into()],
        observations,
        transition,
        reward,
        observation,
        discount: cfg.gamma,
        initial_belief,
        terminal: Some(term),
        attacker_feasible: None,
    })?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowGameConfig {
    #[serde(rename = "L")]
    pub stops: usize,
    /// Stop-success probabilities indexed by the number of stops already
    /// taken: `phi[k]` applies when `L - k` stops remain.
    pub phi: Vec<f64>,
    pub r_st: f64,
    pub r_cost: f64,
    pub r_int: f64,
    pub obs: ObservationSpec,
    pub gamma: f64,
}

impl Default for FlowGameConfig {
    fn default() -> Self {
        Self {
            stops: 3,
            phi: vec![0.3, 0.6, 0.9],
            r_st: 5.0,
            r_cost: -1.0,
            r_int: -10.0,
            obs: ObservationSpec::game_default(),
            gamma: 0.99,
        }
    }
}

impl FlowGameConfig {
    /// `φ_l`, the stop-success probability with `l` stops remaining.
    pub fn phi_at(&self, l: usize) -> f64 {
        self.phi[self.stops - l]
    }

    pub fn validate(&self) -> Result<(), UsecaseError> {
        if self.stops < 1 {
            return Err(invalid("L must be at least 1"));
        }
        if self.phi.len() != self.stops {
            return Err(invalid(format!("phi needs {} entries, got {}", self.stops, self.phi.len())));
        }
        if self.phi.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("phi entries must lie in [0, 1]"));
        }
        if self.phi.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("phi must be nondecreasing in the number of stops taken"));
        }
        if !(self.r_st > 0.0) {
            return Err(invalid("r_st must be positive"));
        }
        if !(self.r_cost < 0.0) {
            return Err(invalid("r_cost must be negative"));
        }
        if !(self.r_int < 0.0) {
            return Err(invalid("r_int must be negative"));
        }
        check_discount(self.gamma)
    }
}

/// Zero-sum flow game. The attacker's first stop starts the intrusion, its
/// second ends it.
pub fn build_flow_game(cfg: &FlowGameConfig) -> Result<ModelKernel, UsecaseError> {
    cfg.validate()?;
    let big_l = cfg.stops;
    let term = terminal_index(big_l);
    let n = term + 1;
    let mut transition: Vec<Row> = Vec::with_capacity(n * 4);
    let mut reward = Vec::with_capacity(n * 4);
    for idx in 0..n {
        for d in [CONTINUE, STOP] {
            for a in [CONTINUE, STOP] {
                if idx == term {
                    transition.push(vec![(term, 1.0)]);
                    reward.push(0.0);
                    continue;
                }
                let (s, l) = decode_state(idx);
                let row = if (l == 1 && d == STOP) || (s == 1 && a == STOP) {
                    vec![(term, 1.0)]
                } else {
                    let next_l = l - d;
                    if s == 0 {
                        vec![(state_index(a, next_l), 1.0)]
                    } else {
                        let phi = cfg.phi_at(l);
                        vec![(term, phi), (state_index(1, next_l), 1.0 - phi)]
                    }
                };
                transition.push(row);
                let r = match (s, d, a) {
                    (1, _, STOP) => 0.0,
                    (0, CONTINUE, _) => 0.0,
                    (0, _, _) => cfg.r_cost / l as f64,
                    (_, STOP, _) => cfg.r_st / l as f64,
                    _ => cfg.r_int,
                };
                reward.push(r);
            }
        }
    }
    let (observations, observation) = observation_parts(&cfg.obs, n)?;
    let mut initial_belief = vec![0.0; n];
    initial_belief[state_index(0, big_l)] = 1.0;
    Ok(ModelKernel::new(KernelParts {
        name: "flow-game".into(),
        states: state_names(big_l),
        defender_actions: two_actions(),
        attacker_actions: two_actions(),
        observations,
        transition,
        reward,
        observation,
        discount: cfg.gamma,
        initial_belief,
        terminal: Some(term),
        attacker_feasible: None,
    })?)
}

/// Belief-threshold baseline: stop iff the belief mass on intrusion states
/// strictly exceeds `alpha`.
pub fn threshold_strategy(alpha: f64, stops: usize) -> Result<Strategy, UsecaseError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(Strategy::Threshold { alpha, states: intrusion_states(stops), below: CONTINUE, above: STOP, n_actions: 2 })
}
