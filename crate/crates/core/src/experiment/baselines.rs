//! Baseline strategies.

use crate::decision::Strategy;
use crate::usecase::recovery::{alert_priority, decode_observation, priority_cutpoints, RecoveryConfig};
use crate::usecase::UsecaseError;

/// Alert priorities, lowest first.
pub const PRIORITY_NAMES: [&str; 4] = ["very-low", "low", "medium", "high"];
pub const MEDIUM: usize = 2;
pub const DEFAULT_QUANTILES: [f64; 3] = [0.5, 0.9, 0.99];

pub fn priority_index(name: &str) -> Option<usize> {
    PRIORITY_NAMES.iter().position(|p| *p == name)
}

/// Recovery action given per-replica priorities: recover replica `l` iff its
/// priority is at least `threshold`.
pub fn alert_action(priorities: &[usize], threshold: usize) -> usize {
    priorities.iter().enumerate().filter(|&(_, &p)| p >= threshold).fold(0, |acc, (l, _)| acc | (1 << l))
}

/// Observation-indexed recovery policy for the recovery POMDP. Alert levels
/// are bucketed into priorities by quantile cut-points of the safe-replica
/// alert distribution. Nothing is recovered before the first observation.
pub fn alert_baseline_strategy(cfg: &RecoveryConfig, priority_threshold: usize, quantiles: &[f64]) -> Result<Strategy, UsecaseError> {
    cfg.validate()?;
    let cuts = priority_cutpoints(&cfg.obs_safe, quantiles);
    let levels = cfg.obs_safe.len();
    let k = cfg.replicas;
    let n_actions = 1usize << k;
    let n_obs = levels.pow(k as u32);
    let probs = (0..n_obs)
        .map(|o| {
            let pr: Vec<usize> = decode_observation(o, levels, k).iter().map(|&lv| alert_priority(lv, &cuts)).collect();
            let mut row = vec![0.0; n_actions];
            row[alert_action(&pr, priority_threshold)] = 1.0;
            row
        })
        .collect();
    let mut initial = vec![0.0; n_actions];
    initial[0] = 1.0;
    Ok(Strategy::ObservationLookup { probs, initial })
}
