//! Recovery POMDP over `K` networked replicas.
//!
//! States and actions are bitmasks: bit `l` of the state is set when replica
//! `l` is compromised, bit `l` of the action when replica `l` is recovered.
//! Observations are per-replica alert levels combined in mixed radix with
//! replica 0 as the least significant digit.

use serde::{Deserialize, Serialize};

use super::{check_discount, check_distribution, invalid, UsecaseError};
use crate::decision::{KernelParts, ModelKernel, Row};

pub const DEFAULT_REPLICA_CAP: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    #[serde(rename = "K")]
    pub replicas: usize,
    /// Undirected neighbor pairs; `None` means a line `0 - 1 - ... - K-1`.
    pub adjacency: Option<Vec<[usize; 2]>>,
    /// `p(o^l | s^l = 0)` over alert levels.
    pub obs_safe: Vec<f64>,
    /// `p(o^l | s^l = 1)` over the same levels.
    pub obs_compromised: Vec<f64>,
    pub gamma: f64,
    pub cap: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            replicas: 3,
            adjacency: None,
            obs_safe: vec![0.5, 0.3, 0.12, 0.06, 0.02],
            obs_compromised: vec![0.05, 0.1, 0.2, 0.3, 0.35],
            gamma: 0.99,
            cap: DEFAULT_REPLICA_CAP,
        }
    }
}

impl RecoveryConfig {
    /// Neighbor lists after validation.
    pub fn neighbors(&self) -> Result<Vec<Vec<usize>>, UsecaseError> {
        let k = self.replicas;
        let edges: Vec<[usize; 2]> = match &self.adjacency {
            Some(e) => e.clone(),
            None => (1..k).map(|l| [l - 1, l]).collect(),
        };
        let mut out = vec![Vec::new(); k];
        for [i, j] in edges {
            if i >= k || j >= k {
                return Err(invalid(format!("adjacency pair ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(invalid("adjacency must be irreflexive"));
            }
            if !out[i].contains(&j) {
                out[i].push(j);
                out[j].push(i);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), UsecaseError> {
        if self.replicas == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if self.replicas > self.cap {
            return Err(UsecaseError::DimensionCap { what: "K", value: self.replicas, cap: self.cap });
        }
        check_distribution("obs_safe", &self.obs_safe)?;
        check_distribution("obs_compromised", &self.obs_compromised)?;
        if self.obs_safe.len() != self.obs_compromised.len() {
            return Err(invalid("per-replica observation rows differ in length"));
        }
        check_discount(self.gamma)?;
        self.neighbors().map(|_| ())
    }
}

/// `min{0.2 (1 + N), 1}` for a safe replica with `N` compromised neighbors.
pub fn compromise_probability(compromised_neighbors: usize) -> f64 {
    (0.2 * (1.0 + compromised_neighbors as f64)).min(1.0)
}

/// `-Σ_l (2 s^l (1 - a^l) + a^l (1 - s^l))`.
pub fn recovery_reward(state: usize, action: usize, replicas: usize) -> f64 {
    (0..replicas)
        .map(|l| {
            let s = (state >> l) & 1;
            let a = (action >> l) & 1;
            -((2 * s * (1 - a) + a * (1 - s)) as f64)
        })
        .sum()
}

/// Per-replica alert levels of a joint observation index.
pub fn decode_observation(o: usize, levels: usize, replicas: usize) -> Vec<usize> {
    let mut rest = o;
    (0..replicas)
        .map(|_| {
            let d = rest % levels;
            rest /= levels;
            d
        })
        .collect()
}

pub fn encode_observation(per_replica: &[usize], levels: usize) -> usize {
    per_replica.iter().rev().fold(0, |acc, &d| acc * levels + d)
}

fn bits(mask: usize, k: usize) -> String {
    (0..k).map(|l| if (mask >> l) & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn build_recovery_pomdp(cfg: &RecoveryConfig) -> Result<ModelKernel, UsecaseError> {
    cfg.validate()?;
    let k = cfg.replicas;
    let nbrs = cfg.neighbors()?;
    let n = 1usize << k;
    let levels = cfg.obs_safe.len();
    let n_obs = levels.pow(k as u32);

    let mut transition: Vec<Row> = Vec::with_capacity(n * n);
    let mut reward = Vec::with_capacity(n * n);
    for s in 0..n {
        // Marginal probability that each replica is compromised next step
        // when it is not recovered.
        let stay: Vec<f64> = (0..k)
            .map(|l| {
                if (s >> l) & 1 == 1 {
                    1.0
                } else {
                    compromise_probability(nbrs[l].iter().filter(|&&j| (s >> j) & 1 == 1).count())
                }
            })
            .collect();
        for a in 0..n {
            let mut row: Row = vec![(0, 1.0)];
            for l in 0..k {
                let p1 = if (a >> l) & 1 == 1 { 0.0 } else { stay[l] };
                let mut next = Vec::with_capacity(row.len() * 2);
                for &(m, p) in &row {
                    if p1 < 1.0 {
                        next.push((m, p * (1.0 - p1)));
                    }
                    if p1 > 0.0 {
                        next.push((m | (1 << l), p * p1));
                    }
                }
                row = next;
            }
            transition.push(row);
            reward.push(recovery_reward(s, a, k));
        }
    }

    let mut observation = Vec::with_capacity(n * n_obs);
    for s in 0..n {
        for o in 0..n_obs {
            let digits = decode_observation(o, levels, k);
            let p: f64 = digits
                .iter()
                .enumerate()
                .map(|(l, &d)| if (s >> l) & 1 == 1 { cfg.obs_compromised[d] } else { cfg.obs_safe[d] })
                .product();
            observation.push(p);
        }
    }
    let mut initial_belief = vec![0.0; n];
    initial_belief[0] = 1.0;
    Ok(ModelKernel::new(KernelParts {
        name: "recovery-pomdp".into(),
        states: (0..n).map(|s| bits(s, k)).collect(),
        defender_actions: (0..n).map(|a| bits(a, k)).collect(),
        attacker_actions: vec!["null".into()],
        observations: (0..n_obs)
            .map(|o| decode_observation(o, levels, k).iter().map(|d| d.to_string()).collect::<Vec<_>>().join("."))
            .collect(),
        transition,
        reward,
        observation,
        discount: cfg.gamma,
        initial_belief,
        terminal: None,
        attacker_feasible: None,
    })?)
}

/// Alert levels at which the safe-state CDF first reaches each cut-point.
pub fn priority_cutpoints(obs_safe: &[f64], quantiles: &[f64]) -> Vec<usize> {
    quantiles
        .iter()
        .map(|&q| {
            let mut acc = 0.0;
            for (v, p) in obs_safe.iter().enumerate() {
                acc += p;
                if acc >= q - 1e-12 {
                    return v;
                }
            }
            obs_safe.len() - 1
        })
        .collect()
}

/// Priority 0..=cutpoints.len(): the number of cut-points the level exceeds.
pub fn alert_priority(level: usize, cutpoints: &[usize]) -> usize {
    cutpoints.iter().filter(|&&c| level > c).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::validate_kernel;

    #[test]
    fn compromise_law() {
        assert_eq!(compromise_probability(0), 0.2);
        assert_eq!(compromise_probability(4), 1.0);
    }

    #[test]
    fn reward_examples() {
        // s = (1,1,0), a = (1,0,1) with replica 0 as bit 0
        assert_eq!(recovery_reward(0b011, 0b101, 3), -3.0);
        assert_eq!(recovery_reward(0, 0, 3), 0.0);
    }

    #[test]
    fn isolated_replica_and_recovery() {
        let cfg = RecoveryConfig { replicas: 2, adjacency: Some(vec![]), ..RecoveryConfig::default() };
        let k = build_recovery_pomdp(&cfg).unwrap();
        assert!(validate_kernel(&k).is_valid());
        assert!((k.transition_prob(0, 0, 0, 0b01) - 0.2 * 0.8).abs() < 1e-15);
        // recovered replica is safe next step, the untouched compromised one stays
        assert_eq!(k.transition_prob(0b11, 0b01, 0, 0b10), 1.0);
    }

    #[test]
    fn observation_factorizes() {
        let cfg = RecoveryConfig::default();
        let k = build_recovery_pomdp(&cfg).unwrap();
        let o = encode_observation(&[4, 0, 2], 5);
        let expect = cfg.obs_compromised[4] * cfg.obs_safe[0] * cfg.obs_safe[2];
        assert_eq!(k.observation_prob(0b001, o), expect);
    }

    #[test]
    fn cap_is_enforced() {
        let cfg = RecoveryConfig { replicas: 7, ..RecoveryConfig::default() };
        assert!(matches!(build_recovery_pomdp(&cfg), Err(UsecaseError::DimensionCap { .. })));
    }

    #[test]
    fn cutpoints_from_safe_quantiles() {
        let c = priority_cutpoints(&[0.5, 0.3, 0.12, 0.06, 0.02], &[0.5, 0.9, 0.99]);
        assert_eq!(c, vec![0, 2, 4]);
        assert_eq!(alert_priority(0, &c), 0);
        assert_eq!(alert_priority(3, &c), 2);
    }
}
