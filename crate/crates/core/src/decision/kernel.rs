//! Finite model kernels.
//!
//! A [`ModelKernel`] holds the transition law `f(s' | s, a_D, a_A)`, the
//! defender-centric reward `r(s, a_D, a_A)`, the observation law `z(o | s)`,
//! the discount and the initial belief. Single-agent models use a singleton
//! attacker action set. Transition rows are sparse; observation rows are dense.

use serde::{Deserialize, Serialize};

use super::DecisionError;

/// Sparse distribution over successor states.
pub type Row = Vec<(usize, f64)>;

pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Construction input for [`ModelKernel::new`].
#[derive(Clone, Debug)]
pub struct KernelParts {
    pub name: String,
    pub states: Vec<String>,
    pub defender_actions: Vec<String>,
    pub attacker_actions: Vec<String>,
    pub observations: Vec<String>,
    /// One row per `(s, a_D, a_A)` in row-major order.
    pub transition: Vec<Row>,
    /// One entry per `(s, a_D, a_A)` in row-major order.
    pub reward: Vec<f64>,
    /// `|S| * |O|` entries, row-major by state.
    pub observation: Vec<f64>,
    pub discount: f64,
    pub initial_belief: Vec<f64>,
    pub terminal: Option<usize>,
    /// Optional `|S| * |A_A|` feasibility mask for attacker actions.
    pub attacker_feasible: Option<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelKernel {
    name: String,
    states: Vec<String>,
    defender_actions: Vec<String>,
    attacker_actions: Vec<String>,
    observations: Vec<String>,
    transition: Vec<Row>,
    reward: Vec<f64>,
    observation: Vec<f64>,
    discount: f64,
    initial_belief: Vec<f64>,
    terminal: Option<usize>,
    attacker_feasible: Option<Vec<bool>>,
    fully_observed: bool,
}

impl ModelKernel {
    /// Checks shapes and normalizes sparse rows (sorted, duplicates merged,
    /// exact zeros dropped). Stochasticity is not enforced here; see
    /// [`validate_kernel`].
    pub fn new(parts: KernelParts) -> Result<Self, DecisionError> {
        let ns = parts.states.len();
        let nd = parts.defender_actions.len();
        let na = parts.attacker_actions.len();
        let no = parts.observations.len();
        if ns == 0 || nd == 0 || na == 0 || no == 0 {
            return Err(DecisionError::Shape("state, action and observation sets must be nonempty".into()));
        }
        let rows = ns * nd * na;
        if parts.transition.len() != rows {
            return Err(DecisionError::Shape(format!(
                "expected {rows} transition rows, got {}",
                parts.transition.len()
            )));
        }
        if parts.reward.len() != rows {
            return Err(DecisionError::Shape(format!("expected {rows} rewards, got {}", parts.reward.len())));
        }
        if parts.observation.len() != ns * no {
            return Err(DecisionError::Shape(format!(
                "expected {} observation entries, got {}",
                ns * no,
                parts.observation.len()
            )));
        }
        if parts.initial_belief.len() != ns {
            return Err(DecisionError::Shape("initial belief length differs from state count".into()));
        }
        if let Some(t) = parts.terminal {
            if t >= ns {
                return Err(DecisionError::Shape(format!("terminal state {t} out of range")));
            }
        }
        if let Some(mask) = &parts.attacker_feasible {
            if mask.len() != ns * na {
                return Err(DecisionError::Shape("attacker feasibility mask has wrong length".into()));
            }
        }
        let mut transition = parts.transition;
        for row in transition.iter_mut() {
            if row.iter().any(|&(s, _)| s >= ns) {
                return Err(DecisionError::Shape("transition successor out of range".into()));
            }
            normalize_row(row);
        }
        let fully_observed = ns == no
            && (0..ns).all(|s| (0..no).all(|o| parts.observation[s * no + o] == if s == o { 1.0 } else { 0.0 }));
        Ok(Self {
            name: parts.name,
            states: parts.states,
            defender_actions: parts.defender_actions,
            attacker_actions: parts.attacker_actions,
            observations: parts.observations,
            transition,
            reward: parts.reward,
            observation: parts.observation,
            discount: parts.discount,
            initial_belief: parts.initial_belief,
            terminal: parts.terminal,
            attacker_feasible: parts.attacker_feasible,
            fully_observed,
        })
    }

    pub fn to_parts(&self) -> KernelParts {
        KernelParts {
            name: self.name.clone(),
            states: self.states.clone(),
            defender_actions: self.defender_actions.clone(),
            attacker_actions: self.attacker_actions.clone(),
            observations: self.observations.clone(),
            transition: self.transition.clone(),
            reward: self.reward.clone(),
            observation: self.observation.clone(),
            discount: self.discount,
            initial_belief: self.initial_belief.clone(),
            terminal: self.terminal,
            attacker_feasible: self.attacker_feasible.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn states(&self) -> &[String] {
        &self.states
    }
    pub fn defender_actions(&self) -> &[String] {
        &self.defender_actions
    }
    pub fn attacker_actions(&self) -> &[String] {
        &self.attacker_actions
    }
    pub fn observations(&self) -> &[String] {
        &self.observations
    }
    pub fn n_states(&self) -> usize {
        self.states.len()
    }
    pub fn n_defender_actions(&self) -> usize {
        self.defender_actions.len()
    }
    pub fn n_attacker_actions(&self) -> usize {
        self.attacker_actions.len()
    }
    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn initial_belief(&self) -> &[f64] {
        &self.initial_belief
    }
    pub fn terminal(&self) -> Option<usize> {
        self.terminal
    }
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal == Some(s)
    }
    /// True when the attacker has more than the null action.
    pub fn is_game(&self) -> bool {
        self.attacker_actions.len() > 1
    }
    /// True when `z` is the identity table.
    pub fn is_fully_observed(&self) -> bool {
        self.fully_observed
    }

    #[inline]
    pub fn row_index(&self, s: usize, d: usize, a: usize) -> usize {
        (s * self.defender_actions.len() + d) * self.attacker_actions.len() + a
    }

    #[inline]
    pub fn transition_row(&self, s: usize, d: usize, a: usize) -> &[(usize, f64)] {
        &self.transition[self.row_index(s, d, a)]
    }

    pub fn transition_prob(&self, s: usize, d: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, d, a)
            .iter()
            .find(|&&(t, _)| t == next)
            .map_or(0.0, |&(_, p)| p)
    }

    #[inline]
    pub fn reward(&self, s: usize, d: usize, a: usize) -> f64 {
        self.reward[self.row_index(s, d, a)]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn observation_prob(&self, s: usize, o: usize) -> f64 {
        self.observation[s * self.observations.len() + o]
    }

    pub fn observation_row(&self, s: usize) -> &[f64] {
        let no = self.observations.len();
        &self.observation[s * no..(s + 1) * no]
    }

    pub fn attacker_feasible(&self, s: usize, a: usize) -> bool {
        self.attacker_feasible
            .as_ref()
            .is_none_or(|m| m[s * self.attacker_actions.len() + a])
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }
    pub fn defender_action_index(&self, name: &str) -> Option<usize> {
        self.defender_actions.iter().position(|s| s == name)
    }
    pub fn attacker_action_index(&self, name: &str) -> Option<usize> {
        self.attacker_actions.iter().position(|s| s == name)
    }

    /// Largest absolute reward over all `(s, a_D, a_A)`.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Returns a copy with a different discount.
    pub fn with_discount(&self, discount: f64) -> Self {
        let mut k = self.clone();
        k.discount = discount;
        k
    }
}

fn normalize_row(row: &mut Row) {
    row.sort_by_key(|&(s, _)| s);
    let mut merged: Row = Vec::with_capacity(row.len());
    for &(s, p) in row.iter() {
        match merged.last_mut() {
            Some((t, q)) if *t == s => *q += p,
            _ => merged.push((s, p)),
        }
    }
    merged.retain(|&(_, p)| p != 0.0);
    *row = merged;
}

/// One invariant violation found by [`validate_kernel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TransitionRowSum { state: usize, defender_action: usize, attacker_action: usize, deviation: f64 },
    NegativeTransition { state: usize, defender_action: usize, attacker_action: usize, next: usize, value: f64 },
    ObservationRowSum { state: usize, deviation: f64 },
    NegativeObservation { state: usize, observation: usize, value: f64 },
    InitialBeliefSum { deviation: f64 },
    NegativeInitialBelief { state: usize, value: f64 },
    TerminalNotAbsorbing { defender_action: usize, attacker_action: usize },
    TerminalReward { defender_action: usize, attacker_action: usize, value: f64 },
    NonFiniteReward { state: usize, defender_action: usize, attacker_action: usize },
    Discount { value: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violated kernel invariant. Never fails.
pub fn validate_kernel(kernel: &ModelKernel) -> ValidationReport {
    let tol = STOCHASTIC_TOLERANCE;
    let mut violations = Vec::new();
    let (ns, nd, na) = (kernel.n_states(), kernel.n_defender_actions(), kernel.n_attacker_actions());
    if !(0.0..1.0).contains(&kernel.discount) {
        violations.push(Violation::Discount { value: kernel.discount });
    }
    for s in 0..ns {
        for d in 0..nd {
            for a in 0..na {
                let row = kernel.transition_row(s, d, a);
                let mut sum = 0.0;
                for &(next, p) in row {
                    if p < 0.0 || !p.is_finite() {
                        violations.push(Violation::NegativeTransition {
                            state: s,
                            defender_action: d,
                            attacker_action: a,
                            next,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > tol || !sum.is_finite() {
                    violations.push(Violation::TransitionRowSum {
                        state: s,
                        defender_action: d,
                        attacker_action: a,
                        deviation: 1.0 - sum,
                    });
                }
                if !kernel.reward(s, d, a).is_finite() {
                    violations.push(Violation::NonFiniteReward { state: s, defender_action: d, attacker_action: a });
                }
            }
        }
        let row = kernel.observation_row(s);
        let mut sum = 0.0;
        for (o, &p) in row.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                violations.push(Violation::NegativeObservation { state: s, observation: o, value: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > tol || !sum.is_finite() {
            violations.push(Violation::ObservationRowSum { state: s, deviation: 1.0 - sum });
        }
    }
    let mut sum = 0.0;
    for (s, &p) in kernel.initial_belief.iter().enumerate() {
        if p < 0.0 || !p.is_finite() {
            violations.push(Violation::NegativeInitialBelief { state: s, value: p });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > tol || !sum.is_finite() {
        violations.push(Violation::InitialBeliefSum { deviation: 1.0 - sum });
    }
    if let Some(t) = kernel.terminal {
        for d in 0..nd {
            for a in 0..na {
                let row = kernel.transition_row(t, d, a);
                let absorbing = row.iter().all(|&(n, p)| n == t || p == 0.0)
                    && (kernel.transition_prob(t, d, a, t) - 1.0).abs() <= tol;
                if !absorbing {
                    violations.push(Violation::TerminalNotAbsorbing { defender_action: d, attacker_action: a });
                }
                let r = kernel.reward(t, d, a);
                if r != 0.0 {
                    violations.push(Violation::TerminalReward { defender_action: d, attacker_action: a, value: r });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Canonical JSON document: ordered name arrays plus dense probability arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelDocument {
    pub name: String,
    pub states: Vec<String>,
    pub defender_actions: Vec<String>,
    pub attacker_actions: Vec<String>,
    pub observations: Vec<String>,
    /// Dense rows of length `|S|`, one per `(s, a_D, a_A)` in row-major order.
    pub transition: Vec<Vec<f64>>,
    /// Flat, `(s, a_D, a_A)` row-major.
    pub reward: Vec<f64>,
    /// Dense rows of length `|O|`, one per state.
    pub observation: Vec<Vec<f64>>,
    pub discount: f64,
    pub initial_belief: Vec<f64>,
    #[serde(default)]
    pub terminal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacker_feasible: Option<Vec<Vec<bool>>>,
}

impl ModelKernel {
    pub fn to_document(&self) -> KernelDocument {
        let ns = self.n_states();
        let transition = self
            .transition
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; ns];
                for &(s, p) in row {
                    dense[s] = p;
                }
                dense
            })
            .collect();
        let na = self.n_attacker_actions();
        KernelDocument {
            name: self.name.clone(),
            states: self.states.clone(),
            defender_actions: self.defender_actions.clone(),
            attacker_actions: self.attacker_actions.clone(),
            observations: self.observations.clone(),
            transition,
            reward: self.reward.clone(),
            observation: (0..ns).map(|s| self.observation_row(s).to_vec()).collect(),
            discount: self.discount,
            initial_belief: self.initial_belief.clone(),
            terminal: self.terminal.map(|t| self.states[t].clone()),
            attacker_feasible: self.attacker_feasible.as_ref().map(|m| m.chunks(na).map(<[bool]>::to_vec).collect()),
        }
    }

    pub fn from_document(doc: KernelDocument) -> Result<Self, DecisionError> {
        let ns = doc.states.len();
        let no = doc.observations.len();
        let mut transition = Vec::with_capacity(doc.transition.len());
        for (i, dense) in doc.transition.into_iter().enumerate() {
            if dense.len() != ns {
                return Err(DecisionError::Shape(format!("transition row {i} has length {}, expected {ns}", dense.len())));
            }
            transition.push(dense.into_iter().enumerate().filter(|&(_, p)| p != 0.0).collect());
        }
        if doc.observation.len() != ns {
            return Err(DecisionError::Shape("observation table needs one row per state".into()));
        }
        let mut observation = Vec::with_capacity(ns * no);
        for (s, row) in doc.observation.into_iter().enumerate() {
            if row.len() != no {
                return Err(DecisionError::Shape(format!("observation row {s} has length {}, expected {no}", row.len())));
            }
            observation.extend(row);
        }
        let terminal = match doc.terminal {
            None => None,
            Some(name) => Some(
                doc.states
                    .iter()
                    .position(|s| *s == name)
                    .ok_or_else(|| DecisionError::Shape(format!("terminal state '{name}' is not a state")))?,
            ),
        };
        let attacker_feasible = doc.attacker_feasible.map(|m| m.into_iter().flatten().collect());
        Self::new(KernelParts {
            name: doc.name,
            states: doc.states,
            defender_actions: doc.defender_actions,
            attacker_actions: doc.attacker_actions,
            observations: doc.observations,
            transition,
            reward: doc.reward,
            observation,
            discount: doc.discount,
            initial_belief: doc.initial_belief,
            terminal,
            attacker_feasible,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("kernel document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DecisionError> {
        let doc: KernelDocument = serde_json::from_str(text).map_err(|e| DecisionError::Shape(format!("kernel JSON: {e}")))?;
        Self::from_document(doc)
    }
}

impl Serialize for ModelKernel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModelKernel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = KernelDocument::deserialize(deserializer)?;
        Self::from_document(doc).map_err(serde::de::Error::custom)
    }
}

/// Identity observation table for fully observed models.
pub fn identity_observation(n_states: usize) -> Vec<f64> {
    let mut z = vec![0.0; n_states * n_states];
    for s in 0..n_states {
        z[s * n_states + s] = 1.0;
    }
    z
}
