//! One-dimensional Gaussian mixtures: EM fitting and discretization onto an
//! integer support.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SysidError;
use crate::decision::sample_index;
use crate::seed;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl Component {
    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.stddev;
        -0.5 * z * z - self.stddev.ln() - LN_SQRT_2PI
    }
}

/// Weighted Gaussian components plus the inclusive integer support used when
/// the mixture is discretized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub components: Vec<Component>,
    pub support: (i64, i64),
}

impl MixtureModel {
    pub fn new(components: Vec<Component>, support: (i64, i64)) -> Result<Self, SysidError> {
        let m = Self { components, support };
        m.check()?;
        Ok(m)
    }

    pub fn single(mean: f64, stddev: f64, support: (i64, i64)) -> Self {
        Self { components: vec![Component { weight: 1.0, mean, stddev }], support }
    }

    pub fn check(&self) -> Result<(), SysidError> {
        if self.components.is_empty() {
            return Err(SysidError::InvalidModel("no components".into()));
        }
        if self.components.iter().any(|c| !(c.weight >= 0.0) || !(c.stddev > 0.0) || !c.mean.is_finite()) {
            return Err(SysidError::InvalidModel("weights must be nonnegative and stddevs positive".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SysidError::InvalidModel(format!("weights sum to {total}")));
        }
        if self.support.0 > self.support.1 {
            return Err(SysidError::InvalidModel("empty support".into()));
        }
        Ok(())
    }

    pub fn log_density(&self, x: f64) -> f64 {
        log_sum_exp(self.components.iter().filter(|c| c.weight > 0.0).map(|c| c.weight.ln() + c.log_density(x)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        let c = self.components[sample_index(&weights, rng)];
        Normal::new(c.mean, c.stddev).expect("stddev checked positive").sample(rng)
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 - e^x)` for `x <= 0`.
fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln Φ(x)` for the standard normal CDF, accurate deep into the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * libm::erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -30.0 {
        (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic series of the Mills ratio.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln()
    }
}

/// `ln(Φ(b) - Φ(a))` for `a < b`, evaluated in whichever tail keeps precision.
fn log_interval_mass(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        log_normal_cdf(b) + ln_one_minus_exp(log_normal_cdf(a) - log_normal_cdf(b))
    } else if a >= 0.0 {
        log_normal_cdf(-a) + ln_one_minus_exp(log_normal_cdf(-b) - log_normal_cdf(-a))
    } else {
        let s = std::f64::consts::SQRT_2;
        (0.5 * (libm::erf(b / s) - libm::erf(a / s))).ln()
    }
}

/// Probability of each integer in the support, proportional to the mixture
/// mass on `[v - 0.5, v + 0.5)` and renormalized over the support.
pub fn discretize_mixture(m: &MixtureModel) -> Result<Vec<f64>, SysidError> {
    m.check()?;
    let (lo, hi) = m.support;
    let logs: Vec<f64> = (lo..=hi)
        .map(|v| {
            let v = v as f64;
            log_sum_exp(m.components.iter().filter(|c| c.weight > 0.0).map(|c| {
                let a = (v - 0.5 - c.mean) / c.stddev;
                let b = (v + 0.5 - c.mean) / c.stddev;
                c.weight.ln() + log_interval_mass(a, b)
            }))
        })
        .collect();
    let total = log_sum_exp(logs.iter().copied());
    if !total.is_finite() {
        return Err(SysidError::InvalidModel("mixture has no mass representable on the support".into()));
    }
    Ok(logs.iter().map(|l| (l - total).exp()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GmmFit {
    pub model: MixtureModel,
    /// Total log-likelihood at the initial parameters and after every M-step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Components whose variance hit the floor at some iteration.
    pub floored: Vec<usize>,
}

/// k-means++ seeding followed by a few Lloyd passes. Returns centroids and
/// the pooled within-cluster variance.
fn initial_means(xs: &[f64], k: usize, seed_value: u64) -> (Vec<f64>, f64) {
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::stream::INIT]));
    let mut means = vec![xs[rng.random_range(0..xs.len())]];
    let mut d2: Vec<f64> = xs.iter().map(|x| (x - means[0]).powi(2)).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let probs: Vec<f64> = d2.iter().map(|d| d / total).collect();
            xs[sample_index(&probs, &mut rng)]
        } else {
            means[0]
        };
        means.push(next);
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min((x - next).powi(2));
        }
    }
    let mut assign = vec![0usize; xs.len()];
    for _ in 0..10 {
        for (a, x) in assign.iter_mut().zip(xs) {
            *a = (0..k).min_by(|&i, &j| (x - means[i]).abs().total_cmp(&(x - means[j]).abs())).unwrap_or(0);
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &x) in assign.iter().zip(xs) {
            sums[a] += x;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                means[j] = sums[j] / counts[j] as f64;
            }
        }
    }
    let pooled = assign.iter().zip(xs).map(|(&a, &x)| (x - means[a]).powi(2)).sum::<f64>() / xs.len() as f64;
    (means, pooled)
}

/// Expectation-maximization for a `k`-component mixture. Stops when the mean
/// per-sample log-likelihood improves by less than `tol`, or after `max_iter`
/// M-steps. Variances are floored at `1e-6` of the data variance.
pub fn fit_gmm(samples: &[f64], k: usize, seed_value: u64, max_iter: usize, tol: f64) -> Result<GmmFit, SysidError> {
    if k == 0 || samples.len() < 10 * k {
        return Err(SysidError::TooFewSamples { needed: 10 * k.max(1), got: samples.len() });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(SysidError::InvalidModel("samples must be finite".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let data_var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let floor = (1e-6 * data_var).max(1e-12);
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64;
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64;

    let (means, pooled) = initial_means(samples, k, seed_value);
    let sd0 = pooled.max(floor).sqrt();
    let mut comps: Vec<Component> = means.iter().map(|&m| Component { weight: 1.0 / k as f64, mean: m, stddev: sd0 }).collect();
    let mut floored = Vec::new();
    let mut resp = vec![0.0; samples.len() * k];

    let e_step = |comps: &[Component], resp: &mut [f64]| -> f64 {
        let mut ll = 0.0;
        let mut logs = vec![0.0; k];
        for (i, &x) in samples.iter().enumerate() {
            for (j, c) in comps.iter().enumerate() {
                logs[j] = if c.weight > 0.0 { c.weight.ln() + c.log_density(x) } else { f64::NEG_INFINITY };
            }
            let lse = log_sum_exp(logs.iter().copied());
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - lse).exp();
            }
        }
        ll
    };

    let mut history = vec![e_step(&comps, &mut resp)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for (j, c) in comps.iter_mut().enumerate() {
            let nk: f64 = (0..samples.len()).map(|i| resp[i * k + j]).sum();
            if nk <= 0.0 {
                c.weight = 0.0;
                continue;
            }
            let mu = samples.iter().enumerate().map(|(i, x)| resp[i * k + j] * x).sum::<f64>() / nk;
            let var = samples.iter().enumerate().map(|(i, x)| resp[i * k + j] * (x - mu).powi(2)).sum::<f64>() / nk;
            c.weight = nk / n;
            c.mean = mu;
            c.stddev = if var < floor {
                if !floored.contains(&j) {
                    log::warn!("mixture component {j} collapsed; variance clamped to {floor:e}");
                    floored.push(j);
                }
                floor.sqrt()
            } else {
                var.sqrt()
            };
        }
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= total);
        let ll = e_step(&comps, &mut resp);
        let gain = (ll - history[history.len() - 1]) / n;
        history.push(ll);
        if gain.abs() < tol {
            converged = true;
            break;
        }
    }
    Ok(GmmFit { model: MixtureModel { components: comps, support: (lo, hi) }, log_likelihood: history, iterations, converged, floored })
}
