use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Channel, SysidError, Trace};

/// Categorical distribution over the observed support, with the raw counts
/// kept so the estimate can be checked in exact arithmetic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Categorical {
    pub support: Vec<u64>,
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
}

impl Categorical {
    pub fn from_values(values: &[u64]) -> Self {
        let mut tally = BTreeMap::new();
        for &v in values {
            *tally.entry(v).or_insert(0u64) += 1;
        }
        let total = values.len() as f64;
        let (support, counts): (Vec<u64>, Vec<u64>) = tally.into_iter().unzip();
        let probs = counts.iter().map(|&c| c as f64 / total).collect();
        Self { support, counts, probs }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn prob(&self, v: u64) -> f64 {
        self.support.binary_search(&v).map_or(0.0, |i| self.probs[i])
    }

    /// Dense vector over `0..=max`; mass above `max` is folded into the last entry.
    pub fn dense(&self, max: u64) -> Vec<f64> {
        let mut out = vec![0.0; max as usize + 1];
        for (&v, &p) in self.support.iter().zip(&self.probs) {
            out[v.min(max) as usize] += p;
        }
        out
    }
}

/// Empirical `ẑ(· | label)` of one channel.
pub fn fit_empirical(trace: &Trace, channel: Channel, label: u8) -> Result<Categorical, SysidError> {
    let values = trace.channel_values(channel, label);
    if values.is_empty() {
        return Err(SysidError::EmptyStratum { label });
    }
    Ok(Categorical::from_values(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysid::TraceRecord;

    fn rec(severe: u64, label: u8) -> TraceRecord {
        TraceRecord { t: 0, severe, warning: 0, logins: 0, label }
    }

    #[test]
    fn counting() {
        let trace = Trace { records: vec![rec(2, 0), rec(2, 0), rec(3, 0), rec(9, 1)] };
        let c = fit_empirical(&trace, Channel::Severe, 0).unwrap();
        assert_eq!(c.support, vec![2, 3]);
        assert_eq!(c.counts, vec![2, 1]);
        assert!((c.prob(2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(fit_empirical(&Trace::default(), Channel::Severe, 1), Err(SysidError::EmptyStratum { label: 1 }));
    }

    #[test]
    fn single_record_is_degenerate() {
        let trace = Trace { records: vec![rec(5, 1)] };
        let c = fit_empirical(&trace, Channel::Severe, 1).unwrap();
        assert_eq!(c.probs, vec![1.0]);
    }
}
