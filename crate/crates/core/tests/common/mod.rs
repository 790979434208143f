//! Shared generators for the integration tests.
#![allow(dead_code)]

use defensim_core::decision::{identity_observation, KernelParts, ModelKernel, Strategy};
use defensim_core::seed;
use rand::Rng;

/// Random probability vector of length `n` (some entries may be zero).
pub fn random_dist<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    if v.iter().sum::<f64>() == 0.0 {
        v[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random fully observed kernel with `nd` defender and `na` attacker actions.
pub fn random_kernel(seed_value: u64, ns: usize, nd: usize, na: usize, gamma: f64) -> ModelKernel {
    let mut rng = seed::rng(seed_value);
    let rows = ns * nd * na;
    let transition = (0..rows)
        .map(|_| random_dist(ns, &mut rng).into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect())
        .collect();
    let reward = (0..rows).map(|_| rng.random_range(-5.0..5.0)).collect();
    ModelKernel::new(KernelParts {
        name: "random".into(),
        states: (0..ns).map(|s| format!("s{s}")).collect(),
        defender_actions: (0..nd).map(|a| format!("d{a}")).collect(),
        attacker_actions: (0..na).map(|a| format!("a{a}")).collect(),
        observations: (0..ns).map(|s| format!("s{s}")).collect(),
        transition,
        reward,
        observation: identity_observation(ns),
        discount: gamma,
        initial_belief: random_dist(ns, &mut rng),
        terminal: None,
        attacker_feasible: None,
    })
    .expect("random kernel has consistent shapes")
}

pub fn random_strategy(seed_value: u64, ns: usize, n_actions: usize) -> Strategy {
    let mut rng = seed::rng(seed_value);
    Strategy::Tabular { probs: (0..ns).map(|_| random_dist(n_actions, &mut rng)).collect() }
}

/// One-state zero-sum matrix game with the given defender payoffs.
pub fn matrix_game(payoff: &[Vec<f64>]) -> ModelKernel {
    let nd = payoff.len();
    let na = payoff[0].len();
    ModelKernel::new(KernelParts {
        name: "matrix".into(),
        states: vec!["s".into()],
        defender_actions: (0..nd).map(|a| format!("d{a}")).collect(),
        attacker_actions: (0..na).map(|a| format!("a{a}")).collect(),
        observations: vec!["s".into()],
        transition: vec![vec![(0, 1.0)]; nd * na],
        reward: payoff.iter().flatten().copied().collect(),
        observation: identity_observation(1),
        discount: 0.0,
        initial_belief: vec![1.0],
        terminal: None,
        attacker_feasible: None,
    })
    .expect("matrix game")
}

/// Naive dense solve of `(I - γP) J = r` by Gaussian elimination with
/// partial pivoting; independent of the library's evaluator.
pub fn dense_policy_value(kernel: &ModelKernel, defender: &Strategy, attacker: &Strategy) -> Vec<f64> {
    let ns = kernel.n_states();
    let g = kernel.discount();
    let mut m = vec![vec![0.0; ns + 1]; ns];
    for s in 0..ns {
        let pd = defender.at_state(s, ns).unwrap();
        let pa = attacker.at_state(s, ns).unwrap();
        m[s][s] += 1.0;
        for (d, wd) in pd.iter().enumerate() {
            for (a, wa) in pa.iter().enumerate() {
                let w = wd * wa;
                m[s][ns] += w * kernel.reward(s, d, a);
                for s2 in 0..ns {
                    m[s][s2] -= g * w * kernel.transition_prob(s, d, a, s2);
                }
            }
        }
    }
    for c in 0..ns {
        let p = (c..ns).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in 0..ns {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=ns {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..ns).map(|s| m[s][ns] / m[s][s]).collect()
}

pub mod configs {
    //! Random valid configs for every builder.

    use super::random_dist;
    use defensim_core::seed;
    use defensim_core::sysid::{Component, MixtureModel};
    use defensim_core::usecase::flow::{FlowGameConfig, FlowPomdpConfig};
    use defensim_core::usecase::obs::ObservationSpec;
    use defensim_core::usecase::recovery::RecoveryConfig;
    use defensim_core::usecase::replication::{KernelSource, ReplicationConfig};
    use defensim_core::usecase::segmentation::{InfraGraph, SegmentationConfig};
    use rand::Rng;

    fn obs<R: Rng>(rng: &mut R) -> ObservationSpec {
        if rng.random_bool(0.5) {
            let m = rng.random_range(1..8);
            ObservationSpec::Table { no_intrusion: random_dist(m, rng), intrusion: random_dist(m, rng) }
        } else {
            let hi = rng.random_range(5..300);
            let mix = |rng: &mut R| {
                let k = rng.random_range(1..4);
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
                MixtureModel {
                    components: w
                        .iter()
                        .map(|&weight| Component { weight, mean: rng.random_range(-20.0..hi as f64 + 20.0), stddev: rng.random_range(0.5..50.0) })
                        .collect(),
                    support: (0, hi),
                }
            };
            ObservationSpec::Mixture { no_intrusion: mix(rng), intrusion: mix(rng), bins: rng.random_range(1..40) }
        }
    }

    pub fn flow_pomdp(s: u64) -> FlowPomdpConfig {
        let mut rng = seed::rng(s);
        FlowPomdpConfig {
            stops: rng.random_range(1..6),
            p: rng.random_range(1e-4..0.999),
            r_st: rng.random_range(0.1..20.0),
            r_sla: rng.random_range(0.1..5.0),
            r_int: -rng.random_range(0.1..30.0),
            obs: obs(&mut rng),
            gamma: rng.random_range(0.0..0.999),
        }
    }

    pub fn flow_game(s: u64) -> FlowGameConfig {
        let mut rng = seed::rng(s);
        let stops = rng.random_range(1..6);
        let mut phi: Vec<f64> = (0..stops).map(|_| rng.random::<f64>()).collect();
        phi.sort_by(f64::total_cmp);
        FlowGameConfig {
            stops,
            phi,
            r_st: rng.random_range(0.1..20.0),
            r_cost: -rng.random_range(0.1..5.0),
            r_int: -rng.random_range(0.1..30.0),
            obs: obs(&mut rng),
            gamma: rng.random_range(0.0..0.999),
        }
    }

    pub fn replication(s: u64) -> ReplicationConfig {
        let mut rng = seed::rng(s);
        let s_max = rng.random_range(1..9);
        ReplicationConfig {
            s_max,
            n1: rng.random_range(0..=s_max),
            kernel_source: KernelSource::BirthDeath { p_add: rng.random(), q_fail: rng.random_range(0.0..0.5) },
            epsilon_a: rng.random_range(0.01..0.99),
            r_min: rng.random_range(0..=s_max),
            lambda: rng.random_range(0.0..20.0),
            p_a: rng.random_range(0.0..0.2),
            gamma: rng.random_range(0.0..0.999),
        }
    }

    pub fn recovery(s: u64) -> RecoveryConfig {
        let mut rng = seed::rng(s);
        let k = rng.random_range(1..5);
        let levels = rng.random_range(1..6);
        let mut edges = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if rng.random_bool(0.5) {
                    edges.push([i, j]);
                }
            }
        }
        RecoveryConfig {
            replicas: k,
            adjacency: Some(edges),
            obs_safe: random_dist(levels, &mut rng),
            obs_compromised: random_dist(levels, &mut rng),
            gamma: rng.random_range(0.0..0.999),
            ..RecoveryConfig::default()
        }
    }

    pub fn segmentation(s: u64) -> SegmentationConfig {
        let mut rng = seed::rng(s);
        let n = rng.random_range(1..4);
        let zones = rng.random_range(1..3);
        let n_workflows = rng.random_range(1..=n);
        let owner: Vec<usize> = (0..n).map(|i| if i < n_workflows { i } else { rng.random_range(0..n_workflows) }).collect();
        let parent = (0..n)
            .map(|i| {
                let earlier: Vec<usize> = (0..i).filter(|&j| owner[j] == owner[i]).collect();
                if earlier.is_empty() || rng.random_bool(0.3) {
                    None
                } else {
                    Some(earlier[rng.random_range(0..earlier.len())])
                }
            })
            .collect();
        let workflows = (0..n_workflows).map(|w| (0..n).filter(|&i| owner[i] == w).collect()).collect();
        let levels = rng.random_range(1..4);
        let tables = if rng.random_bool(0.5) { 1 } else { n };
        SegmentationConfig {
            graph: InfraGraph {
                nodes: (0..n).map(|i| format!("n{i}")).collect(),
                parent,
                workflows,
                zones: (0..zones).map(|z| format!("z{z}")).collect(),
                initial_zone: (0..n).map(|_| rng.random_range(0..zones)).collect(),
                shutdown_zone: if zones > 1 && rng.random_bool(0.5) { Some(zones - 1) } else { None },
            },
            eta: rng.random_range(0.0..3.0),
            gamma: rng.random_range(0.0..0.999),
            p_recon: rng.random(),
            p_compromise: rng.random(),
            alert_model: (0..tables).map(|_| (0..3).map(|_| random_dist(levels, &mut rng)).collect()).collect(),
            ..SegmentationConfig::default()
        }
    }
}
