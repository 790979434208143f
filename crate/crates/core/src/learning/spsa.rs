//! Simultaneous-perturbation stochastic approximation (maximization).
//!
//! Gains: `a_k = a / (A + k + 1)^λ`, `c_k = c / (k + 1)^ε`. Each iteration
//! draws a Rademacher direction `Δ`, evaluates the objective at `θ ± c_k Δ`
//! and steps `θ += a_k (y⁺ - y⁻) / (2 c_k Δ)`, then projects onto the box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LearningError;
use crate::decision::{monte_carlo_value, EpisodeSpec, ModelKernel, Strategy};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaParams {
    pub c: f64,
    pub epsilon: f64,
    pub lambda: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
    pub a: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SpsaParams {
    fn default() -> Self {
        Self { c: 1.0, epsilon: 0.101, lambda: 0.602, big_a: 100.0, a: 1.0, iterations: 300, seed: 0 }
    }
}

impl SpsaParams {
    pub fn validate(&self) -> Result<(), LearningError> {
        let ok = self.c > 0.0
            && self.a > 0.0
            && self.big_a >= 0.0
            && self.epsilon > 0.0
            && self.epsilon < 1.0
            && self.lambda > 0.0
            && self.lambda <= 1.0;
        if !ok {
            return Err(LearningError::InvalidParams("SPSA needs c > 0, a > 0, A >= 0, 0 < ε < 1, 0 < λ <= 1".into()));
        }
        Ok(())
    }

    pub fn step_gain(&self, k: usize) -> f64 {
        self.a / (self.big_a + k as f64 + 1.0).powf(self.lambda)
    }

    pub fn perturbation_gain(&self, k: usize) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.epsilon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpsaIterate {
    pub k: usize,
    /// Wall-clock time since the optimizer started; not reproducible.
    pub elapsed_seconds: f64,
    pub theta: Vec<f64>,
    /// Mean of the two perturbed evaluations, an estimate of the objective at `theta`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpsaResult {
    pub theta: Vec<f64>,
    pub history: Vec<SpsaIterate>,
}

/// Maximizes a noisy objective. `objective(θ, eval_seed)` receives a fresh
/// seed per call so noisy evaluators stay reproducible; `bounds` is a
/// coordinate box applied after every step.
pub fn spsa_optimize<F>(mut objective: F, theta0: &[f64], bounds: (f64, f64), params: &SpsaParams) -> Result<SpsaResult, LearningError>
where
    F: FnMut(&[f64], u64) -> Result<f64, LearningError>,
{
    params.validate()?;
    let mut rng = seed::rng(seed::derive(params.seed, &[seed::stream::TRAIN]));
    let mut theta: Vec<f64> = theta0.iter().map(|t| t.clamp(bounds.0, bounds.1)).collect();
    let mut history = Vec::with_capacity(params.iterations);
    let dim = theta.len();
    let started = std::time::Instant::now();
    for k in 0..params.iterations {
        let ak = params.step_gain(k);
        let ck = params.perturbation_gain(k);
        let delta: Vec<f64> = (0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + ck * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - ck * d).collect();
        let eval_seed = seed::derive(params.seed, &[seed::stream::EVAL, k as u64]);
        let y_plus = objective(&plus, eval_seed)?;
        let y_minus = objective(&minus, eval_seed)?;
        if !y_plus.is_finite() || !y_minus.is_finite() {
            return Err(LearningError::NonFinite { step: k });
        }
        history.push(SpsaIterate { k, elapsed_seconds: started.elapsed().as_secs_f64(), theta: theta.clone(), value: 0.5 * (y_plus + y_minus) });
        let diff = y_plus - y_minus;
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t = (*t + ak * diff / (2.0 * ck * d)).clamp(bounds.0, bounds.1);
        }
    }
    Ok(SpsaResult { theta, history })
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Threshold search in logit space: `α = sigmoid(θ)` with `θ ∈ [-12, 12]`.
/// Each objective call is a Monte-Carlo value over `episodes` runs.
pub struct ThresholdSearch<'a, F: Fn(f64) -> Strategy> {
    pub kernel: &'a ModelKernel,
    pub attacker: &'a Strategy,
    pub make: F,
    pub episodes: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub alpha: f64,
    pub history: Vec<SpsaIterate>,
}

impl<F: Fn(f64) -> Strategy> ThresholdSearch<'_, F> {
    pub fn value(&self, alpha: f64, eval_seed: u64) -> Result<f64, LearningError> {
        let defender = (self.make)(alpha);
        let spec = EpisodeSpec { kernel: self.kernel, defender: &defender, attacker: self.attacker, horizon: self.horizon };
        Ok(monte_carlo_value(&spec, self.episodes, eval_seed)?.mean)
    }

    pub fn run(&self, alpha0: f64, params: &SpsaParams) -> Result<ThresholdResult, LearningError> {
        let out = spsa_optimize(|theta, s| self.value(sigmoid(theta[0]), s), &[logit(alpha0)], (-12.0, 12.0), params)?;
        Ok(ThresholdResult { alpha: sigmoid(out.theta[0]), history: out.history })
    }
}
