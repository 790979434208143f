//! Replication control: an MDP over the healthy-replica count and a game in
//! which the attacker chooses how many replicas to target.
//!
//! The per-step reward is `-a - λ·1[s < r_min]`: unit cost per added replica
//! plus a Lagrangian penalty for unavailable steps. Service counts as
//! available when at least `r_min` replicas are healthy.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{check_discount, invalid, UsecaseError};
use crate::decision::{validate_kernel, KernelParts, ModelKernel, Row, Strategy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSource {
    /// Each healthy replica fails independently with `q_fail`; adding a
    /// replica succeeds with `p_add` when below `s_max`.
    BirthDeath { p_add: f64, q_fail: f64 },
    /// Canonical kernel JSON with states `0..=s_max` and actions `{0, 1}`.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicationConfig {
    pub s_max: usize,
    #[serde(rename = "N1")]
    pub n1: usize,
    pub kernel_source: KernelSource,
    pub epsilon_a: f64,
    pub r_min: usize,
    /// Weight of the availability penalty in the scalarized reward.
    pub lambda: f64,
    pub p_a: f64,
    pub gamma: f64,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            s_max: 10,
            n1: 3,
            kernel_source: KernelSource::BirthDeath { p_add: 0.9, q_fail: 0.05 },
            epsilon_a: 0.95,
            r_min: 1,
            lambda: 10.0,
            p_a: 0.01,
            gamma: 0.99,
        }
    }
}

impl ReplicationConfig {
    pub fn validate(&self) -> Result<(), UsecaseError> {
        if self.s_max == 0 {
            return Err(invalid("s_max must be at least 1"));
        }
        if self.n1 > self.s_max {
            return Err(invalid(format!("N1 = {} exceeds s_max = {}", self.n1, self.s_max)));
        }
        if !(self.epsilon_a > 0.0 && self.epsilon_a < 1.0) {
            return Err(invalid("epsilon_a must lie in (0, 1)"));
        }
        if self.r_min > self.s_max {
            return Err(invalid("r_min exceeds s_max"));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.p_a) {
            return Err(invalid("p_a must lie in [0, 1]"));
        }
        if let KernelSource::BirthDeath { p_add, q_fail } = self.kernel_source {
            if !(0.0..=1.0).contains(&p_add) || !(0.0..=1.0).contains(&q_fail) {
                return Err(invalid("birth-death probabilities must lie in [0, 1]"));
            }
        }
        check_discount(self.gamma)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        -(a as f64) - if s < self.r_min { self.lambda } else { 0.0 }
    }
}

/// Binomial pmf `P(X = j)` for `X ~ Bin(n, p)`, `j = 0..=n`.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n] = 1.0;
        return out;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_choose = 0.0;
    for (j, slot) in out.iter_mut().enumerate() {
        if j > 0 {
            log_choose += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        *slot = (log_choose + j as f64 * lp + (n - j) as f64 * lq).exp();
    }
    out
}

fn birth_death_row(s: usize, a: usize, s_max: usize, p_add: f64, q_fail: f64) -> Row {
    let mut dense = vec![0.0; s_max + 1];
    for (survivors, p) in binomial_pmf(s, 1.0 - q_fail).into_iter().enumerate() {
        if a == 1 && survivors < s_max {
            dense[survivors + 1] += p * p_add;
            dense[survivors] += p * (1.0 - p_add);
        } else {
            dense[survivors] += p;
        }
    }
    dense.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect()
}

/// Transition rows `f(· | s, a)` indexed `s * 2 + a`.
fn mdp_rows(cfg: &ReplicationConfig) -> Result<Vec<Row>, UsecaseError> {
    match &cfg.kernel_source {
        KernelSource::BirthDeath { p_add, q_fail } => Ok((0..=cfg.s_max)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| birth_death_row(s, a, cfg.s_max, *p_add, *q_fail))
            .collect()),
        KernelSource::File { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsecaseError::FileFormat(format!("{}: {e}", path.display())))?;
            let k = ModelKernel::from_json(&text).map_err(|e| UsecaseError::FileFormat(e.to_string()))?;
            let report = validate_kernel(&k);
            if !report.is_valid() {
                return Err(UsecaseError::FileFormat(format!(
                    "loaded kernel is not row-stochastic: {} violation(s), first {:?}",
                    report.violations.len(),
                    report.violations[0]
                )));
            }
            if k.n_states() != cfg.s_max + 1 || k.n_defender_actions() != 2 || k.n_attacker_actions() != 1 {
                return Err(UsecaseError::FileFormat(format!(
                    "expected {} states, 2 actions and a single attacker action",
                    cfg.s_max + 1
                )));
            }
            Ok((0..=cfg.s_max).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| k.transition_row(s, a, 0).to_vec()).collect())
        }
    }
}

fn initial(cfg: &ReplicationConfig) -> Vec<f64> {
    let mut b = vec![0.0; cfg.s_max + 1];
    b[cfg.n1] = 1.0;
    b
}

fn count_names(s_max: usize) -> Vec<String> {
    (0..=s_max).map(|s| s.to_string()).collect()
}

pub fn build_replication_mdp(cfg: &ReplicationConfig) -> Result<(ModelKernel, AvailabilityEvaluator), UsecaseError> {
    cfg.validate()?;
    let n = cfg.s_max + 1;
    let transition = mdp_rows(cfg)?;
    let reward = (0..n).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| cfg.reward(s, a)).collect();
    let kernel = ModelKernel::new(KernelParts {
        name: "replication-mdp".into(),
        states: count_names(cfg.s_max),
        defender_actions: vec!["keep".into(), "add".into()],
        attacker_actions: vec!["null".into()],
        observations: count_names(cfg.s_max),
        transition,
        reward,
        observation: crate::decision::identity_observation(n),
        discount: cfg.gamma,
        initial_belief: initial(cfg),
        terminal: None,
        attacker_feasible: None,
    })?;
    Ok((kernel, AvailabilityEvaluator { n1: cfg.n1, r_min: cfg.r_min }))
}

/// Attacker action `k` targets `k` replicas; each targeted healthy replica
/// is lost with probability `p_a` before the defender's action takes effect.
pub fn build_replication_game(cfg: &ReplicationConfig) -> Result<ModelKernel, UsecaseError> {
    cfg.validate()?;
    let n = cfg.s_max + 1;
    let base = mdp_rows(cfg)?;
    let mut transition = Vec::with_capacity(n * 2 * n);
    let mut reward = Vec::with_capacity(n * 2 * n);
    let mut dense = vec![0.0; n];
    for s in 0..n {
        for d in 0..2 {
            for k in 0..n {
                dense.iter_mut().for_each(|x| *x = 0.0);
                for (lost, p) in binomial_pmf(k.min(s), cfg.p_a).into_iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for &(next, q) in &base[(s - lost) * 2 + d] {
                        dense[next] += p * q;
                    }
                }
                transition.push(dense.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect::<Row>());
                reward.push(cfg.reward(s, d));
            }
        }
    }
    Ok(ModelKernel::new(KernelParts {
        name: "replication-game".into(),
        states: count_names(cfg.s_max),
        defender_actions: vec!["keep".into(), "add".into()],
        attacker_actions: (0..n).map(|k| format!("target{k}")).collect(),
        observations: count_names(cfg.s_max),
        transition,
        reward,
        observation: crate::decision::identity_observation(n),
        discount: cfg.gamma,
        initial_belief: initial(cfg),
        terminal: None,
        attacker_feasible: None,
    })?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LongRun {
    /// Long-run average of `a_t`.
    pub average_cost: f64,
    /// Long-run fraction of steps with at least `r_min` healthy replicas.
    pub availability: f64,
}

/// Long-run averages of a stationary policy started from `N₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AvailabilityEvaluator {
    pub n1: usize,
    pub r_min: usize,
}

impl AvailabilityEvaluator {
    /// Limiting state distribution from `N₁`. Iterates the lazy chain
    /// `(P + I) / 2`, which is aperiodic and has the same Cesàro limit.
    pub fn occupancy(&self, kernel: &ModelKernel, policy: &Strategy) -> Result<Vec<f64>, UsecaseError> {
        let (rows, _) = crate::decision::induced_chain(kernel, policy, &Strategy::uniform(kernel.n_states(), kernel.n_attacker_actions()))?;
        let n = rows.len();
        let mut mu = vec![0.0; n];
        mu[self.n1] = 1.0;
        for _ in 0..2_000_000 {
            let mut next: Vec<f64> = mu.iter().map(|m| 0.5 * m).collect();
            for (s, row) in rows.iter().enumerate() {
                for &(t, p) in row {
                    next[t] += 0.5 * mu[s] * p;
                }
            }
            let change = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum::<f64>();
            mu = next;
            if change < 1e-14 {
                break;
            }
        }
        Ok(mu)
    }

    pub fn evaluate(&self, kernel: &ModelKernel, policy: &Strategy) -> Result<LongRun, UsecaseError> {
        let mu = self.occupancy(kernel, policy)?;
        let table = policy.state_table(kernel.n_states())?;
        let average_cost = mu.iter().zip(&table).map(|(m, dist)| m * dist.get(1).copied().unwrap_or(0.0)).sum();
        let availability = mu.iter().enumerate().filter(|&(s, _)| s >= self.r_min).map(|(_, m)| m).sum();
        Ok(LongRun { average_cost, availability })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedSolution {
    pub lambda: f64,
    pub policy: Strategy,
    pub long_run: LongRun,
}

/// Bisection on the penalty weight `λ` until the availability constraint
/// binds within `1e-3` (or the feasible end of `[0, lambda_max]` is reached).
/// `solve` returns a policy for the kernel built with the given `λ`.
pub fn lagrangian_bisection<F>(cfg: &ReplicationConfig, lambda_max: f64, mut solve: F) -> Result<ConstrainedSolution, UsecaseError>
where
    F: FnMut(&ModelKernel) -> Result<Strategy, UsecaseError>,
{
    let mut attempt = |lambda: f64| -> Result<ConstrainedSolution, UsecaseError> {
        let (kernel, eval) = build_replication_mdp(&ReplicationConfig { lambda, ..cfg.clone() })?;
        let policy = solve(&kernel)?;
        let long_run = eval.evaluate(&kernel, &policy)?;
        Ok(ConstrainedSolution { lambda, policy, long_run })
    };
    let low = attempt(0.0)?;
    if low.long_run.availability >= cfg.epsilon_a {
        return Ok(low);
    }
    let mut hi = attempt(lambda_max)?;
    if hi.long_run.availability < cfg.epsilon_a {
        return Ok(hi);
    }
    let mut lo_lambda = 0.0;
    for _ in 0..60 {
        if hi.long_run.availability - cfg.epsilon_a <= 1e-3 || hi.lambda - lo_lambda < 1e-9 {
            break;
        }
        let mid = attempt(0.5 * (lo_lambda + hi.lambda))?;
        if mid.long_run.availability >= cfg.epsilon_a {
            hi = mid;
        } else {
            lo_lambda = mid.lambda;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_sums_to_one() {
        for (n, p) in [(0, 0.3), (5, 0.01), (12, 0.5), (3, 1.0)] {
            assert!((binomial_pmf(n, p).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_dynamics_keeps_state() {
        let cfg = ReplicationConfig {
            kernel_source: KernelSource::BirthDeath { p_add: 0.5, q_fail: 0.0 },
            ..ReplicationConfig::default()
        };
        let (k, eval) = build_replication_mdp(&cfg).unwrap();
        let keep = Strategy::stationary(k.n_states(), vec![1.0, 0.0]);
        assert_eq!(k.transition_prob(3, 0, 0, 3), 1.0);
        let lr = eval.evaluate(&k, &keep).unwrap();
        assert!((lr.availability - 1.0).abs() < 1e-12);
        assert_eq!(lr.average_cost, 0.0);
        let add = Strategy::stationary(k.n_states(), vec![0.0, 1.0]);
        assert!((eval.evaluate(&k, &add).unwrap().average_cost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_attack_matches_mdp() {
        let cfg = ReplicationConfig::default();
        let (mdp, _) = build_replication_mdp(&cfg).unwrap();
        let game = build_replication_game(&cfg).unwrap();
        for s in 0..=cfg.s_max {
            for d in 0..2 {
                assert_eq!(game.transition_row(s, d, 0), mdp.transition_row(s, d, 0));
                assert_eq!(game.transition_row(0, d, s), mdp.transition_row(0, d, 0));
            }
        }
    }

    #[test]
    fn bad_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        std::fs::write(&path, "{not json").unwrap();
        let cfg = ReplicationConfig { kernel_source: KernelSource::File { path }, ..ReplicationConfig::default() };
        assert!(matches!(build_replication_mdp(&cfg), Err(UsecaseError::FileFormat(_))));
    }
}
