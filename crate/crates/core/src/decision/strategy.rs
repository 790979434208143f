use serde::{Deserialize, Serialize};

use super::{DecisionError, STOCHASTIC_TOLERANCE};
use crate::learning::net::PolicyNet;

/// Whatever a player knows when it acts. Strategies read the parts they need.
#[derive(Clone, Copy, Debug, Default)]
pub struct InfoState<'a> {
    pub state: Option<usize>,
    pub belief: Option<&'a [f64]>,
    pub observation: Option<usize>,
}

impl<'a> InfoState<'a> {
    pub fn state(s: usize) -> Self {
        Self { state: Some(s), ..Self::default() }
    }
    pub fn belief(b: &'a [f64]) -> Self {
        Self { belief: Some(b), ..Self::default() }
    }
    pub fn observation(o: usize) -> Self {
        Self { observation: Some(o), ..Self::default() }
    }
}

/// Mapping from an information state to a distribution over actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    /// One action distribution per state.
    Tabular { probs: Vec<Vec<f64>> },
    /// Plays `above` when the belief mass on `states` strictly exceeds
    /// `alpha`, otherwise `below`.
    Threshold { alpha: f64, states: Vec<usize>, below: usize, above: usize, n_actions: usize },
    /// Differentiable stochastic policy.
    Parametric { net: PolicyNet },
    /// Distribution indexed by the latest observation; `initial` is used
    /// before anything has been observed.
    ObservationLookup { probs: Vec<Vec<f64>>, initial: Vec<f64> },
}

impl Strategy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Strategy::Tabular { probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states] }
    }

    /// Deterministic tabular strategy playing `actions[s]` in state `s`.
    pub fn pure(actions: &[usize], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        Strategy::Tabular { probs }
    }

    /// Same action distribution in every state.
    pub fn stationary(n_states: usize, dist: Vec<f64>) -> Self {
        Strategy::Tabular { probs: vec![dist; n_states] }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Strategy::Tabular { .. } => "tabular-on-state",
            Strategy::Threshold { .. } => "threshold-on-belief",
            Strategy::Parametric { .. } => "parametric-stochastic",
            Strategy::ObservationLookup { .. } => "lookup-on-history-feature",
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Strategy::Tabular { probs } => probs.first().map_or(0, Vec::len),
            Strategy::Threshold { n_actions, .. } => *n_actions,
            Strategy::Parametric { net } => net.n_actions(),
            Strategy::ObservationLookup { initial, .. } => initial.len(),
        }
    }

    /// Whether acting requires a maintained belief.
    pub fn needs_belief(&self) -> bool {
        match self {
            Strategy::Threshold { .. } => true,
            Strategy::Parametric { net } => matches!(net.features(), crate::learning::net::FeatureMap::Belief { .. }),
            _ => false,
        }
    }

    pub fn distribution(&self, info: &InfoState<'_>) -> Result<Vec<f64>, DecisionError> {
        match self {
            Strategy::Tabular { probs } => {
                let s = info.state.ok_or(DecisionError::MissingInformation("the state"))?;
                probs
                    .get(s)
                    .cloned()
                    .ok_or_else(|| DecisionError::InvalidStrategy(format!("no action distribution for state {s}")))
            }
            Strategy::Threshold { alpha, states, below, above, n_actions } => {
                let mass = match (info.belief, info.state) {
                    (Some(b), _) => states.iter().map(|&s| b.get(s).copied().unwrap_or(0.0)).sum(),
                    (None, Some(s)) => {
                        if states.contains(&s) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    (None, None) => return Err(DecisionError::MissingInformation("a belief")),
                };
                let mut dist = vec![0.0; *n_actions];
                dist[if mass > *alpha { *above } else { *below }] = 1.0;
                Ok(dist)
            }
            Strategy::Parametric { net } => net.action_probs(info),
            Strategy::ObservationLookup { probs, initial } => match info.observation {
                None => Ok(initial.clone()),
                Some(o) => probs
                    .get(o)
                    .cloned()
                    .ok_or_else(|| DecisionError::InvalidStrategy(format!("no action distribution for observation {o}"))),
            },
        }
    }

    /// Action distribution when the player sees the true state.
    pub fn at_state(&self, s: usize, n_states: usize) -> Result<Vec<f64>, DecisionError> {
        match self {
            Strategy::Tabular { .. } => self.distribution(&InfoState::state(s)),
            _ => {
                let mut b = vec![0.0; n_states];
                if s < n_states {
                    b[s] = 1.0;
                }
                self.distribution(&InfoState { state: Some(s), belief: Some(&b), observation: None })
            }
        }
    }

    /// Per-state distributions; fails for strategies that need observations.
    pub fn state_table(&self, n_states: usize) -> Result<Vec<Vec<f64>>, DecisionError> {
        if let Strategy::ObservationLookup { .. } = self {
            return Err(DecisionError::MissingInformation("an observation history"));
        }
        (0..n_states).map(|s| self.at_state(s, n_states)).collect()
    }

    pub fn to_tabular(&self, n_states: usize) -> Result<Strategy, DecisionError> {
        Ok(Strategy::Tabular { probs: self.state_table(n_states)? })
    }

    /// Checks that every stored distribution is a probability vector.
    pub fn check(&self) -> Result<(), DecisionError> {
        let check_row = |row: &[f64]| -> Result<(), DecisionError> {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(DecisionError::InvalidStrategy(format!("row {row:?} is not a distribution")));
            }
            Ok(())
        };
        match self {
            Strategy::Tabular { probs } => {
                let n = probs.first().map_or(0, Vec::len);
                if n == 0 || probs.iter().any(|r| r.len() != n) {
                    return Err(DecisionError::InvalidStrategy("ragged or empty table".into()));
                }
                probs.iter().try_for_each(|r| check_row(r))
            }
            Strategy::Threshold { alpha, below, above, n_actions, .. } => {
                if !(0.0..=1.0).contains(alpha) || *below >= *n_actions || *above >= *n_actions {
                    return Err(DecisionError::InvalidStrategy("threshold parameters out of range".into()));
                }
                Ok(())
            }
            Strategy::Parametric { .. } => Ok(()),
            Strategy::ObservationLookup { probs, initial } => {
                check_row(initial)?;
                probs.iter().try_for_each(|r| check_row(r))
            }
        }
    }
}
