//! Observation tables for the two-state flow models.
//!
//! Raw alert counts live on an integer support (the flow game uses
//! `0..=22000`). To keep kernels small the support is cut into `bins`
//! contiguous buckets of equal width `ceil(len / bins)`; bucket `b` covers raw
//! values `lo + b*w ..= lo + (b+1)*w - 1`. The last bucket may be shorter.

use serde::{Deserialize, Serialize};

use super::{check_distribution, invalid, UsecaseError};
use crate::sysid::{discretize_mixture, Component, MixtureModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservationSpec {
    /// Explicit `z(o | 0)` and `z(o | 1)` over the same outcomes.
    Table { no_intrusion: Vec<f64>, intrusion: Vec<f64> },
    /// Discretized mixtures over a shared raw support, then bucketed.
    Mixture { no_intrusion: MixtureModel, intrusion: MixtureModel, bins: usize },
}

/// Equal-width bucketing of an inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Binning {
    pub lo: i64,
    pub hi: i64,
    pub width: u64,
    pub bins: usize,
}

impl Binning {
    pub fn new(lo: i64, hi: i64, requested: usize) -> Result<Self, UsecaseError> {
        if hi < lo || requested == 0 {
            return Err(invalid("binning needs a nonempty support and at least one bin"));
        }
        let len = (hi - lo + 1) as u64;
        let width = len.div_ceil(requested as u64);
        Ok(Self { lo, hi, width, bins: len.div_ceil(width) as usize })
    }

    /// Bucket of a raw value; values outside the support are clamped.
    pub fn bin_of(&self, raw: i64) -> usize {
        let v = raw.clamp(self.lo, self.hi);
        ((v - self.lo) as u64 / self.width) as usize
    }

    pub fn range_of(&self, bin: usize) -> (i64, i64) {
        let start = self.lo + (bin as u64 * self.width) as i64;
        (start, (start + self.width as i64 - 1).min(self.hi))
    }

    pub fn aggregate(&self, probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.bins];
        for (i, p) in probs.iter().enumerate() {
            out[self.bin_of(self.lo + i as i64)] += p;
        }
        out
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.bins)
            .map(|b| {
                let (a, z) = self.range_of(b);
                if a == z {
                    a.to_string()
                } else {
                    format!("{a}-{z}")
                }
            })
            .collect()
    }
}

/// Resolved observation model: labels plus one row per flow state.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTable {
    pub labels: Vec<String>,
    pub rows: [Vec<f64>; 2],
    pub binning: Option<Binning>,
}

impl ObservationSpec {
    /// Default for the flow POMDP: scalar alert count on `0..=99`, one bucket
    /// per value.
    pub fn pomdp_default() -> Self {
        ObservationSpec::Mixture {
            no_intrusion: MixtureModel::single(20.0, 8.0, (0, 99)),
            intrusion: MixtureModel::single(45.0, 12.0, (0, 99)),
            bins: 100,
        }
    }

    /// Default for the flow game: weighted alert sum on `0..=22000`, one
    /// component without intrusion and three during intrusion.
    pub fn game_default() -> Self {
        let support = (0, 22000);
        ObservationSpec::Mixture {
            no_intrusion: MixtureModel::single(1500.0, 900.0, support),
            intrusion: MixtureModel {
                components: vec![
                    Component { weight: 0.5, mean: 2500.0, stddev: 1200.0 },
                    Component { weight: 0.3, mean: 7000.0, stddev: 2000.0 },
                    Component { weight: 0.2, mean: 14000.0, stddev: 3500.0 },
                ],
                support,
            },
            bins: 100,
        }
    }

    pub fn with_bins(self, bins: usize) -> Self {
        match self {
            ObservationSpec::Mixture { no_intrusion, intrusion, .. } => ObservationSpec::Mixture { no_intrusion, intrusion, bins },
            table => table,
        }
    }

    pub fn resolve(&self) -> Result<ObservationTable, UsecaseError> {
        match self {
            ObservationSpec::Table { no_intrusion, intrusion } => {
                check_distribution("no-intrusion observation row", no_intrusion)?;
                check_distribution("intrusion observation row", intrusion)?;
                if no_intrusion.len() != intrusion.len() {
                    return Err(invalid("observation rows differ in length"));
                }
                Ok(ObservationTable {
                    labels: (0..no_intrusion.len()).map(|o| o.to_string()).collect(),
                    rows: [no_intrusion.clone(), intrusion.clone()],
                    binning: None,
                })
            }
            ObservationSpec::Mixture { no_intrusion, intrusion, bins } => {
                if no_intrusion.support != intrusion.support {
                    return Err(invalid("mixtures must share one support"));
                }
                let binning = Binning::new(no_intrusion.support.0, no_intrusion.support.1, *bins)?;
                let z0 = binning.aggregate(&discretize_mixture(no_intrusion)?);
                let z1 = binning.aggregate(&discretize_mixture(intrusion)?);
                Ok(ObservationTable { labels: binning.labels(), rows: [z0, z1], binning: Some(binning) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_covers_support() {
        let b = Binning::new(0, 22000, 100).unwrap();
        assert_eq!(b.width, 221);
        assert_eq!(b.bins, 100);
        assert_eq!(b.bin_of(0), 0);
        assert_eq!(b.bin_of(22000), 99);
        assert_eq!(b.range_of(99), (21879, 22000));
        assert_eq!(b.bin_of(-5), 0);
    }

    #[test]
    fn defaults_resolve_to_distributions() {
        for spec in [ObservationSpec::pomdp_default(), ObservationSpec::game_default()] {
            let t = spec.resolve().unwrap();
            for row in &t.rows {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
