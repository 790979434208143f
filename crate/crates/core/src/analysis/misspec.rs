//! `‖J - J̃‖∞ ≤ α γ β / (1 - γ)²` for two kernels that share spaces and rewards.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use super::AnalysisError;
use crate::decision::{evaluate_policy, ModelKernel, Strategy, VALUE_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MisspecReport {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub bound: f64,
    pub measured_gap: f64,
    pub holds: bool,
}

fn same_spaces(k1: &ModelKernel, k2: &ModelKernel) -> Result<(), AnalysisError> {
    let dims = |k: &ModelKernel| (k.n_states(), k.n_defender_actions(), k.n_attacker_actions());
    if dims(k1) != dims(k2) {
        return Err(AnalysisError::ShapeMismatch(format!("{:?} vs {:?} (states, defender, attacker)", dims(k1), dims(k2))));
    }
    Ok(())
}

/// Largest L1 distance between corresponding transition rows.
pub fn total_variation_alpha(k1: &ModelKernel, k2: &ModelKernel) -> Result<f64, AnalysisError> {
    same_spaces(k1, k2)?;
    let n = k1.n_states();
    let mut dense = vec![0.0; n];
    let mut alpha: f64 = 0.0;
    for s in 0..n {
        for d in 0..k1.n_defender_actions() {
            for a in 0..k1.n_attacker_actions() {
                let (r1, r2) = (k1.transition_row(s, d, a), k2.transition_row(s, d, a));
                for &(t, p) in r1 {
                    dense[t] += p;
                }
                for &(t, p) in r2 {
                    dense[t] -= p;
                }
                // Sum in a fixed (successor-index) order so the result is symmetric.
                let mut touched: Vec<usize> = r1.iter().chain(r2).map(|&(t, _)| t).collect();
                touched.sort_unstable();
                touched.dedup();
                let dist: f64 = touched.iter().map(|&t| dense[t].abs()).sum();
                touched.iter().for_each(|&t| dense[t] = 0.0);
                alpha = alpha.max(dist);
            }
        }
    }
    Ok(alpha.min(2.0))
}

/// Exact rational value of a finite float as written in its shortest decimal form.
fn decimal(x: f64) -> BigRational {
    let text = format!("{x}");
    let (mantissa, exp) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m.to_string(), e.parse::<i32>().unwrap_or(0)),
        None => (text, 0),
    };
    let negative = mantissa.starts_with('-');
    let digits = mantissa.trim_start_matches('-');
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let num: BigInt = format!("{int}{frac}").parse().unwrap_or_default();
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        r = -r;
    }
    r
}

/// `α γ β / (1 - γ)²`, computed in exact decimal arithmetic and rounded once.
pub fn misspecification_bound(alpha: f64, gamma: f64, beta: f64) -> Result<f64, AnalysisError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(AnalysisError::InvalidDiscount(gamma));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) || !(beta >= 0.0 && beta.is_finite()) {
        return Err(AnalysisError::InvalidInput(format!("alpha and beta must be finite and nonnegative, got {alpha}, {beta}")));
    }
    let (a, g, b) = (decimal(alpha), decimal(gamma), decimal(beta));
    let one = BigRational::from_integer(BigInt::from(1));
    let denom = (&one - &g) * (&one - &g);
    let bound = a * g * b / denom;
    if bound.is_zero() {
        return Ok(0.0);
    }
    Ok(bound.to_f64().unwrap_or(f64::INFINITY))
}

/// Evaluates the same strategy pair on both kernels and compares the gap
/// with the bound.
pub fn bound_check(k: &ModelKernel, k_tilde: &ModelKernel, defender: &Strategy, attacker: &Strategy) -> Result<MisspecReport, AnalysisError> {
    same_spaces(k, k_tilde)?;
    if k.rewards() != k_tilde.rewards() {
        return Err(AnalysisError::RewardMismatch);
    }
    if k.discount() != k_tilde.discount() {
        return Err(AnalysisError::InvalidInput(format!("discounts differ: {} vs {}", k.discount(), k_tilde.discount())));
    }
    let alpha = total_variation_alpha(k, k_tilde)?;
    let beta = k.max_abs_reward();
    let gamma = k.discount();
    let bound = misspecification_bound(alpha, gamma, beta)?;
    let j = evaluate_policy(k, defender, attacker, VALUE_TOLERANCE * 1e-2)?;
    let jt = evaluate_policy(k_tilde, defender, attacker, VALUE_TOLERANCE * 1e-2)?;
    let measured_gap = j.iter().zip(&jt).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(MisspecReport { alpha, beta, gamma, bound, measured_gap, holds: measured_gap <= bound + 1e-9 })
}
