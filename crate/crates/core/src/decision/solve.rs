//! Policy evaluation, exact best response and exploitability.
//!
//! Fixing both players' state-defined strategies turns a kernel into a Markov
//! chain; fixing one player's strategy turns it into an MDP for the other.
//! Values are always in the defender's reward convention unless stated.

use nalgebra::{DMatrix, DVector};

use super::{DecisionError, ModelKernel, Row, Strategy};

pub const VALUE_TOLERANCE: f64 = 1e-8;

/// Above this many states the iterative route is used by default.
const DIRECT_LIMIT: usize = 1500;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMethod {
    Auto,
    Iterative,
    Direct,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: EvalMethod,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { tolerance: VALUE_TOLERANCE, max_iterations: 500_000, method: EvalMethod::Auto }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Defender,
    Attacker,
}

impl Player {
    pub fn opponent(self) -> Self {
        match self {
            Player::Defender => Player::Attacker,
            Player::Attacker => Player::Defender,
        }
    }
}

fn check_discount(gamma: f64) -> Result<(), DecisionError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(DecisionError::InvalidDiscount(gamma));
    }
    Ok(())
}

/// Sparse accumulator reused across rows.
struct Accumulator {
    dense: Vec<f64>,
    touched: Vec<usize>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self { dense: vec![0.0; n], touched: Vec::new() }
    }

    fn add_row(&mut self, row: &[(usize, f64)], w: f64) {
        for &(s, p) in row {
            if self.dense[s] == 0.0 {
                self.touched.push(s);
            }
            self.dense[s] += w * p;
        }
    }

    fn take(&mut self) -> Row {
        self.touched.sort_unstable();
        let row = self.touched.iter().map(|&s| (s, self.dense[s])).filter(|&(_, p)| p != 0.0).collect();
        for &s in &self.touched {
            self.dense[s] = 0.0;
        }
        self.touched.clear();
        row
    }
}

/// Markov chain and expected one-step reward induced by a strategy pair.
pub fn induced_chain(kernel: &ModelKernel, defender: &Strategy, attacker: &Strategy) -> Result<(Vec<Row>, Vec<f64>), DecisionError> {
    let ns = kernel.n_states();
    let dt = defender.state_table(ns)?;
    let at = attacker.state_table(ns)?;
    check_widths(&dt, kernel.n_defender_actions(), "defender")?;
    check_widths(&at, kernel.n_attacker_actions(), "attacker")?;
    let mut acc = Accumulator::new(ns);
    let mut rows = Vec::with_capacity(ns);
    let mut rewards = Vec::with_capacity(ns);
    for s in 0..ns {
        let mut r = 0.0;
        for (d, &pd) in dt[s].iter().enumerate() {
            if pd == 0.0 {
                continue;
            }
            for (a, &pa) in at[s].iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let w = pd * pa;
                r += w * kernel.reward(s, d, a);
                acc.add_row(kernel.transition_row(s, d, a), w);
            }
        }
        rows.push(acc.take());
        rewards.push(r);
    }
    Ok((rows, rewards))
}

fn check_widths(table: &[Vec<f64>], n: usize, who: &str) -> Result<(), DecisionError> {
    if table.iter().any(|row| row.len() != n) {
        return Err(DecisionError::Shape(format!("{who} strategy does not match the kernel's {n} actions")));
    }
    Ok(())
}

fn solve_direct(rows: &[Row], rewards: &[f64], gamma: f64) -> Result<Vec<f64>, DecisionError> {
    let n = rows.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (s, row) in rows.iter().enumerate() {
        for &(t, p) in row {
            a[(s, t)] -= gamma * p;
        }
    }
    let b = DVector::from_column_slice(rewards);
    a.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| DecisionError::Singular("I - γP is singular".into()))
}

fn sweep(rows: &[Row], rewards: &[f64], gamma: f64, values: &[f64]) -> Vec<f64> {
    rows.iter()
        .zip(rewards)
        .map(|(row, r)| r + gamma * row.iter().map(|&(t, p)| p * values[t]).sum::<f64>())
        .collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn solve_iterative(rows: &[Row], rewards: &[f64], gamma: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>, DecisionError> {
    let mut values = vec![0.0; rows.len()];
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = sweep(rows, rewards, gamma, &values);
        change = sup_diff(&next, &values);
        values = next;
        if change <= tol {
            return Ok(values);
        }
    }
    Err(DecisionError::NonConvergence { iterations: max_iter, residual: change })
}

/// Value vector `J` of a strategy pair, satisfying the Bellman fixed point
/// within `tolerance` in sup-norm.
pub fn evaluate_policy(kernel: &ModelKernel, defender: &Strategy, attacker: &Strategy, tolerance: f64) -> Result<Vec<f64>, DecisionError> {
    evaluate_policy_with(kernel, defender, attacker, EvalOptions { tolerance, ..EvalOptions::default() })
}

pub fn evaluate_policy_with(
    kernel: &ModelKernel,
    defender: &Strategy,
    attacker: &Strategy,
    opts: EvalOptions,
) -> Result<Vec<f64>, DecisionError> {
    check_discount(kernel.discount())?;
    let (rows, rewards) = induced_chain(kernel, defender, attacker)?;
    let direct = match opts.method {
        EvalMethod::Direct => true,
        EvalMethod::Iterative => false,
        EvalMethod::Auto => rows.len() <= DIRECT_LIMIT,
    };
    if direct {
        solve_direct(&rows, &rewards, kernel.discount())
    } else {
        solve_iterative(&rows, &rewards, kernel.discount(), opts.tolerance, opts.max_iterations)
    }
}

/// Sup-norm change of each iterative evaluation sweep, starting from zero.
pub fn evaluation_residuals(kernel: &ModelKernel, defender: &Strategy, attacker: &Strategy, sweeps: usize) -> Result<Vec<f64>, DecisionError> {
    check_discount(kernel.discount())?;
    let (rows, rewards) = induced_chain(kernel, defender, attacker)?;
    let mut values = vec![0.0; rows.len()];
    let mut out = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let next = sweep(&rows, &rewards, kernel.discount(), &values);
        out.push(sup_diff(&next, &values));
        values = next;
    }
    Ok(out)
}

/// Expected value under the kernel's initial belief.
pub fn policy_value_from(kernel: &ModelKernel, values: &[f64]) -> f64 {
    kernel.initial_belief().iter().zip(values).map(|(b, v)| b * v).sum()
}

/// Single-agent MDP faced by one player when the other is fixed. Rewards are
/// in the responding player's own convention.
#[derive(Clone, Debug)]
pub struct InducedMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub rows: Vec<Row>,
    pub reward: Vec<f64>,
    pub discount: f64,
}

impl InducedMdp {
    fn q(&self, values: &[f64], s: usize, x: usize) -> f64 {
        let i = s * self.n_actions + x;
        self.reward[i] + self.discount * self.rows[i].iter().map(|&(t, p)| p * values[t]).sum::<f64>()
    }

    /// Greedy action per state, lowest index among near-ties.
    fn greedy(&self, values: &[f64]) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| {
                let qs: Vec<f64> = (0..self.n_actions).map(|x| self.q(values, s, x)).collect();
                let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let tie = 1e-10 * (1.0 + best.abs());
                qs.iter().position(|&q| q >= best - tie).unwrap_or(0)
            })
            .collect()
    }

    fn policy_chain(&self, policy: &[usize]) -> (Vec<Row>, Vec<f64>) {
        let rows = policy.iter().enumerate().map(|(s, &x)| self.rows[s * self.n_actions + x].clone()).collect();
        let rewards = policy.iter().enumerate().map(|(s, &x)| self.reward[s * self.n_actions + x]).collect();
        (rows, rewards)
    }

    fn evaluate(&self, policy: &[usize], tol: f64) -> Result<Vec<f64>, DecisionError> {
        let (rows, rewards) = self.policy_chain(policy);
        if self.n_states <= DIRECT_LIMIT {
            solve_direct(&rows, &rewards, self.discount)
        } else {
            solve_iterative(&rows, &rewards, self.discount, tol, 500_000)
        }
    }

    /// Optimal deterministic policy and its values.
    pub fn solve(&self, tol: f64) -> Result<(Vec<usize>, Vec<f64>), DecisionError> {
        if self.n_states <= DIRECT_LIMIT {
            // Policy iteration; switch only on strict improvement so it terminates.
            let mut policy = self.greedy(&vec![0.0; self.n_states]);
            for _ in 0..10_000 {
                let values = self.evaluate(&policy, tol)?;
                let mut changed = false;
                for (s, current) in policy.iter_mut().enumerate() {
                    let q_cur = self.q(&values, s, *current);
                    let mut best = *current;
                    let mut q_best = q_cur;
                    for x in 0..self.n_actions {
                        let q = self.q(&values, s, x);
                        if q > q_best + 1e-11 * (1.0 + q_best.abs()) {
                            best = x;
                            q_best = q;
                        }
                    }
                    if best != *current {
                        *current = best;
                        changed = true;
                    }
                }
                if !changed {
                    let final_policy = self.greedy(&values);
                    let final_values = if final_policy == policy { values } else { self.evaluate(&final_policy, tol)? };
                    return Ok((final_policy, final_values));
                }
            }
            Err(DecisionError::NonConvergence { iterations: 10_000, residual: f64::NAN })
        } else {
            let mut values = vec![0.0; self.n_states];
            let max_iter = 500_000;
            let mut change = f64::INFINITY;
            for _ in 0..max_iter {
                let next: Vec<f64> = (0..self.n_states)
                    .map(|s| (0..self.n_actions).map(|x| self.q(&values, s, x)).fold(f64::NEG_INFINITY, f64::max))
                    .collect();
                change = sup_diff(&next, &values);
                values = next;
                if change <= tol {
                    let policy = self.greedy(&values);
                    return Ok((policy, values));
                }
            }
            Err(DecisionError::NonConvergence { iterations: max_iter, residual: change })
        }
    }
}

/// MDP faced by `responder` when the opponent plays `opponent`.
pub fn induced_mdp(kernel: &ModelKernel, opponent: &Strategy, responder: Player) -> Result<InducedMdp, DecisionError> {
    check_discount(kernel.discount())?;
    let ns = kernel.n_states();
    let table = opponent.state_table(ns)?;
    let (n_actions, n_opp) = match responder {
        Player::Defender => (kernel.n_defender_actions(), kernel.n_attacker_actions()),
        Player::Attacker => (kernel.n_attacker_actions(), kernel.n_defender_actions()),
    };
    check_widths(&table, n_opp, "opponent")?;
    let sign = if responder == Player::Defender { 1.0 } else { -1.0 };
    let mut acc = Accumulator::new(ns);
    let mut rows = Vec::with_capacity(ns * n_actions);
    let mut reward = Vec::with_capacity(ns * n_actions);
    for s in 0..ns {
        for x in 0..n_actions {
            let mut r = 0.0;
            for (y, &py) in table[s].iter().enumerate() {
                if py == 0.0 {
                    continue;
                }
                let (d, a) = if responder == Player::Defender { (x, y) } else { (y, x) };
                r += py * kernel.reward(s, d, a);
                acc.add_row(kernel.transition_row(s, d, a), py);
            }
            rows.push(acc.take());
            reward.push(sign * r);
        }
    }
    Ok(InducedMdp { n_states: ns, n_actions, rows, reward, discount: kernel.discount() })
}

#[derive(Clone, Debug)]
pub struct BestResponse {
    /// Deterministic greedy strategy (lowest index wins ties).
    pub strategy: Strategy,
    /// Optimal values in the responding player's convention.
    pub values: Vec<f64>,
}

/// Exact best response against a state-defined opponent strategy.
pub fn best_response(kernel: &ModelKernel, opponent: &Strategy, responder: Player, tolerance: f64) -> Result<BestResponse, DecisionError> {
    let mdp = induced_mdp(kernel, opponent, responder)?;
    let (policy, values) = mdp.solve(tolerance)?;
    Ok(BestResponse { strategy: Strategy::pure(&policy, mdp.n_actions), values })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ExploitabilityReport {
    /// Defender value of the pair from `b₁`.
    pub value: f64,
    pub br_gain_defender: f64,
    pub br_gain_attacker: f64,
    pub exploitability: f64,
}

pub fn exploitability_report(kernel: &ModelKernel, defender: &Strategy, attacker: &Strategy) -> Result<ExploitabilityReport, DecisionError> {
    let j = evaluate_policy(kernel, defender, attacker, VALUE_TOLERANCE)?;
    let value = policy_value_from(kernel, &j);
    let br_d = best_response(kernel, attacker, Player::Defender, VALUE_TOLERANCE)?;
    let br_a = best_response(kernel, defender, Player::Attacker, VALUE_TOLERANCE)?;
    let br_gain_defender = policy_value_from(kernel, &br_d.values) - value;
    let br_gain_attacker = policy_value_from(kernel, &br_a.values) + value;
    Ok(ExploitabilityReport {
        value,
        br_gain_defender,
        br_gain_attacker,
        exploitability: br_gain_defender + br_gain_attacker,
    })
}

/// Sum of both players' best-response gains from `b₁`; zero at equilibrium.
pub fn exploitability(kernel: &ModelKernel, defender: &Strategy, attacker: &Strategy) -> Result<f64, DecisionError> {
    exploitability_report(kernel, defender, attacker).map(|r| r.exploitability)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{identity_observation, KernelParts};

    fn absorbing(reward: f64, gamma: f64) -> ModelKernel {
        ModelKernel::new(KernelParts {
            name: "absorbing".into(),
            states: vec!["s".into()],
            defender_actions: vec!["x".into()],
            attacker_actions: vec!["null".into()],
            observations: vec!["s".into()],
            transition: vec![vec![(0, 1.0)]],
            reward: vec![reward],
            observation: identity_observation(1),
            discount: gamma,
            initial_belief: vec![1.0],
            terminal: None,
            attacker_feasible: None,
        })
        .unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_values() {
        let k = absorbing(0.0, 0.9);
        let j = evaluate_policy(&k, &Strategy::uniform(1, 1), &Strategy::uniform(1, 1), 1e-8).unwrap();
        assert_eq!(j, vec![0.0]);
    }

    #[test]
    fn geometric_series() {
        let k = absorbing(1.0, 0.99);
        let d = Strategy::uniform(1, 1);
        for method in [EvalMethod::Direct, EvalMethod::Iterative] {
            let opts = EvalOptions { method, ..EvalOptions::default() };
            let j = evaluate_policy_with(&k, &d, &d, opts).unwrap();
            assert!((j[0] - 100.0).abs() < 1e-6, "{method:?}: {}", j[0]);
        }
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let k = absorbing(1.0, 0.99);
        let d = Strategy::uniform(1, 1);
        let opts = EvalOptions { method: EvalMethod::Iterative, max_iterations: 10, tolerance: 1e-12 };
        assert!(matches!(evaluate_policy_with(&k, &d, &d, opts), Err(DecisionError::NonConvergence { iterations: 10, .. })));
    }

    #[test]
    fn discount_of_one_is_rejected() {
        let k = absorbing(1.0, 1.0);
        let d = Strategy::uniform(1, 1);
        assert_eq!(evaluate_policy(&k, &d, &d, 1e-8), Err(DecisionError::InvalidDiscount(1.0)));
    }
}
