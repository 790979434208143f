//! Sensitivity of learned strategies to a misspecified model parameter.
//!
//! For every grid value `p̃` a strategy is learned on the `p̃` model, then
//! evaluated on that model ("sim") and on the true model ("truth").

use serde::Serialize;

use super::AnalysisError;
use crate::decision::{monte_carlo_value, EpisodeSpec, McEstimate, ModelKernel, Strategy};
use crate::{par, seed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub misspecification: f64,
    pub sim_mean: f64,
    pub sim_std: f64,
    pub truth_mean: f64,
    pub truth_std: f64,
}

/// Pools per-seed estimates of equal size into one mean and stddev.
fn pool(parts: &[McEstimate]) -> (f64, f64) {
    let n: usize = parts.iter().map(|e| e.episodes).sum();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = parts.iter().map(|e| e.mean * e.episodes as f64).sum::<f64>() / n as f64;
    let ss: f64 = parts
        .iter()
        .map(|e| (e.episodes.saturating_sub(1)) as f64 * e.stddev * e.stddev + e.episodes as f64 * (e.mean - mean).powi(2))
        .sum();
    let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
    (mean, var.sqrt())
}

/// Runs the sweep. `build(p)` produces the model for parameter `p`;
/// `learn(kernel, seed)` returns a defender strategy. `attacker` is the
/// (fixed) attacker strategy used in every evaluation. Cell `(g, r)` draws
/// from seeds derived from `(base_seed, g, r)`.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep<B, L>(
    build: B,
    true_param: f64,
    grid: &[f64],
    learn: L,
    attacker: &Strategy,
    eval_episodes: usize,
    horizon: usize,
    seeds: &[u64],
) -> Result<Vec<SweepRow>, AnalysisError>
where
    B: Fn(f64) -> Result<ModelKernel, AnalysisError> + Sync,
    L: Fn(&ModelKernel, u64) -> Result<Strategy, AnalysisError> + Sync,
{
    if seeds.is_empty() || eval_episodes == 0 {
        return Err(AnalysisError::InvalidInput("the sweep needs at least one seed and one evaluation episode".into()));
    }
    let truth = build(true_param)?;
    let cells = grid.len() * seeds.len();
    let results: Vec<Result<(McEstimate, McEstimate), AnalysisError>> = par::map_indices(cells, |c| {
        let (g, r) = (c / seeds.len(), c % seeds.len());
        let cell_seed = seed::derive(seeds[r], &[g as u64, r as u64]);
        let model = build(grid[g])?;
        let strategy = learn(&model, seed::derive(cell_seed, &[seed::stream::TRAIN]))?;
        let eval_seed = seed::derive(cell_seed, &[seed::stream::EVAL]);
        let sim = monte_carlo_value(&EpisodeSpec { kernel: &model, defender: &strategy, attacker, horizon }, eval_episodes, eval_seed)?;
        let tru = monte_carlo_value(&EpisodeSpec { kernel: &truth, defender: &strategy, attacker, horizon }, eval_episodes, eval_seed)?;
        Ok((sim, tru))
    });
    let results: Vec<(McEstimate, McEstimate)> = results.into_iter().collect::<Result<_, _>>()?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &p)| {
            let cell = &results[g * seeds.len()..(g + 1) * seeds.len()];
            let sims: Vec<McEstimate> = cell.iter().map(|c| c.0).collect();
            let truths: Vec<McEstimate> = cell.iter().map(|c| c.1).collect();
            let (sim_mean, sim_std) = pool(&sims);
            let (truth_mean, truth_std) = pool(&truths);
            SweepRow { misspecification: (p - true_param).abs(), sim_mean, sim_std, truth_mean, truth_std }
        })
        .collect())
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["misspecification", "sim_mean", "sim_std", "truth_mean", "truth_std"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn pooling_matches_concatenation() {
        let a = [1.0, 2.0, 3.0];
        let b = [5.0, 7.0, 9.0];
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let (m, s) = pool(&[McEstimate::from_samples(&a), McEstimate::from_samples(&b)]);
        let direct = McEstimate::from_samples(&all);
        assert!((m - direct.mean).abs() < 1e-12);
        assert!((s - direct.stddev).abs() < 1e-12);
    }
}
