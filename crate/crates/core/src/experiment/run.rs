//! Seeded experiment runs and their artifacts.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::baselines::alert_baseline_strategy;
use super::config::{AlgorithmKind, AlgorithmParams, ExperimentConfig, ModelKind, ModelParams, SweepConfig};
use super::ExperimentError;
use crate::analysis::{sensitivity_sweep, spearman, sweep_to_csv, AnalysisError, SweepRow};
use crate::decision::{monte_carlo_value, run_episode, EpisodeSpec, ModelKernel, Strategy};
use crate::learning::curve::{curve_to_string, CurveRow};
use crate::learning::fictitious::{fictitious_play, FpParams, ResponderKind};
use crate::learning::ppo::{pg_train, FeatureChoice, PgParams};
use crate::learning::rollout::{rollout_episode, RolloutContext, RolloutParams};
use crate::learning::spsa::{sigmoid, SpsaParams, ThresholdSearch};
use crate::usecase::flow::{build_flow_game, build_flow_pomdp, threshold_strategy, FlowPomdpConfig};
use crate::usecase::recovery::build_recovery_pomdp;
use crate::usecase::replication::{build_replication_game, build_replication_mdp};
use crate::usecase::segmentation::build_segmentation_game;
use crate::{par, seed};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads for the seed loop; 0 uses the global pool.
    pub jobs: usize,
    /// Silences the pairing warning.
    pub override_pairing: bool,
    /// Fills the `wall_seconds` column. Files are then no longer reproducible.
    pub record_wall_clock: bool,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub round_or_update: usize,
    pub metric_name: String,
    pub mean: f64,
    pub stddev: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// Last recorded value of every metric.
    pub last: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub model: ModelKind,
    pub algorithm: AlgorithmKind,
    pub output_dir: PathBuf,
    pub pairing_warning: Option<String>,
    pub per_seed: Vec<SeedSummary>,
    /// Mean over seeds of each metric's last value.
    pub last_mean: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub output_dir: PathBuf,
    pub rows: Vec<SweepRow>,
    /// Rank correlation between misspecification and the simulated value.
    pub spearman_sim: f64,
    /// `(max - min) / max |truth_mean|` over the grid.
    pub truth_spread: f64,
}

fn runtime(e: impl Display) -> ExperimentError {
    ExperimentError::Runtime(e.to_string())
}

fn io_err(path: &Path, e: impl Display) -> ExperimentError {
    ExperimentError::Io { path: path.display().to_string(), detail: e.to_string() }
}

/// Removes what a failed run wrote.
struct Cleanup {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    armed: bool,
}

impl Cleanup {
    fn new(dir: &Path) -> Result<Self, ExperimentError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, files: Vec::new(), armed: true })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    fn disarm(mut self) {
        self.armed = false;
    }
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

pub(crate) fn build_model(params: &ModelParams) -> Result<ModelKernel, ExperimentError> {
    let k = match params {
        ModelParams::FlowPomdp(c) => build_flow_pomdp(c),
        ModelParams::FlowGame(c) => build_flow_game(c),
        ModelParams::SegmentationGame(c) => build_segmentation_game(c),
        ModelParams::ReplicationMdp(c) => build_replication_mdp(c).map(|(k, _)| k),
        ModelParams::ReplicationGame(c) => build_replication_game(c),
        ModelParams::RecoveryPomdp(c) => build_recovery_pomdp(c),
    };
    k.map_err(runtime)
}

fn row(wall: f64, step: usize, metric: &str, mean: f64, stddev: f64) -> CurveRow {
    CurveRow { wall_seconds: wall, round_or_update: step, metric_name: metric.into(), mean, stddev }
}

fn uniform_attacker(kernel: &ModelKernel) -> Strategy {
    Strategy::uniform(kernel.n_states(), kernel.n_attacker_actions())
}

fn mc(kernel: &ModelKernel, defender: &Strategy, attacker: &Strategy, p: &AlgorithmParams, seed: u64) -> Result<(f64, f64), ExperimentError> {
    let est = monte_carlo_value(&EpisodeSpec { kernel, defender, attacker, horizon: p.horizon }, p.eval_episodes, seed).map_err(runtime)?;
    Ok((est.mean, est.stddev))
}

fn stops_of(params: &ModelParams) -> usize {
    match params {
        ModelParams::FlowPomdp(c) => c.stops,
        ModelParams::FlowGame(c) => c.stops,
        _ => 0,
    }
}

fn run_spsa_threshold(
    kernel: &ModelKernel,
    stops: usize,
    p: &AlgorithmParams,
    base: u64,
    wall: &dyn Fn(f64) -> f64,
) -> Result<Vec<CurveRow>, ExperimentError> {
    let attacker = uniform_attacker(kernel);
    let search = ThresholdSearch {
        kernel,
        attacker: &attacker,
        make: |a| threshold_strategy(a, stops).expect("sigmoid stays in [0, 1]"),
        episodes: p.episodes_per_eval,
        horizon: p.horizon,
    };
    let spsa = SpsaParams { seed: seed::derive(base, &[seed::stream::TRAIN]), ..p.spsa.clone() };
    let out = search.run(p.alpha0, &spsa).map_err(runtime)?;
    let mut checkpoints = vec![(0usize, p.alpha0, 0.0)];
    for it in &out.history {
        let done = it.k + 1;
        if done % p.eval_every == 0 || done == spsa.iterations {
            checkpoints.push((done, sigmoid(it.theta[0]), it.elapsed_seconds));
        }
    }
    let mut rows = Vec::new();
    for (step, alpha, elapsed) in checkpoints {
        let defender = threshold_strategy(alpha, stops).map_err(runtime)?;
        let (mean, sd) = mc(kernel, &defender, &attacker, p, seed::derive(base, &[seed::stream::EVAL]))?;
        rows.push(row(wall(elapsed), step, "value", mean, sd));
        rows.push(row(wall(elapsed), step, "alpha", alpha, 0.0));
    }
    Ok(rows)
}

fn run_fp(kernel: &ModelKernel, responder: ResponderKind, p: &AlgorithmParams, base: u64, wall: &dyn Fn(f64) -> f64) -> Result<Vec<CurveRow>, ExperimentError> {
    let params = FpParams { responder, seed: seed::derive(base, &[seed::stream::TRAIN]), ..p.fp.clone() };
    let out = fictitious_play(kernel, &params).map_err(runtime)?;
    let mut rows = Vec::new();
    for pt in &out.curve {
        let w = wall(pt.elapsed_seconds);
        rows.push(row(w, pt.round, "exploitability", pt.exploitability, 0.0));
        rows.push(row(w, pt.round, "value", pt.value, 0.0));
        rows.push(row(w, pt.round, "br_gain_defender", pt.br_gain_defender, 0.0));
        rows.push(row(w, pt.round, "br_gain_attacker", pt.br_gain_attacker, 0.0));
    }
    Ok(rows)
}

fn run_pg(kernel: &ModelKernel, p: &AlgorithmParams, base: u64, wall: &dyn Fn(f64) -> f64) -> Result<Vec<CurveRow>, ExperimentError> {
    let default_features = if kernel.is_fully_observed() { FeatureChoice::State } else { FeatureChoice::Belief };
    let params = PgParams {
        features: p.features.unwrap_or(default_features),
        seed: seed::derive(base, &[seed::stream::TRAIN]),
        ..p.pg.clone()
    };
    let out = pg_train(kernel, &uniform_attacker(kernel), crate::decision::Player::Defender, &params).map_err(runtime)?;
    let mut rows = Vec::new();
    for pt in &out.curve {
        let w = wall(pt.elapsed_seconds);
        rows.push(row(w, pt.update, "value", pt.eval_mean, pt.eval_stddev));
        rows.push(row(w, pt.update, "env_steps", pt.env_steps as f64, 0.0));
    }
    Ok(rows)
}

fn run_rollout(kernel: &ModelKernel, p: &AlgorithmParams, base: u64, wall: &dyn Fn(f64) -> f64) -> Result<Vec<CurveRow>, ExperimentError> {
    p.rollout.validate(kernel.n_defender_actions()).map_err(runtime)?;
    let attacker = uniform_attacker(kernel);
    let base_strategy = Strategy::uniform(kernel.n_states(), kernel.n_defender_actions());
    let ctx = RolloutContext { kernel, base: &base_strategy, attacker: &attacker };
    let started = Instant::now();
    let mut base_returns = Vec::with_capacity(p.rollout_episodes);
    let mut rollout_returns = Vec::with_capacity(p.rollout_episodes);
    for i in 0..p.rollout_episodes {
        let episode_seed = seed::derive(base, &[seed::stream::EVAL, i as u64]);
        let spec = EpisodeSpec { kernel, defender: &base_strategy, attacker: &attacker, horizon: p.horizon };
        let b = run_episode(&spec, &mut seed::rng(episode_seed)).map_err(runtime)?;
        let params = RolloutParams { seed: episode_seed, ..p.rollout.clone() };
        let r = rollout_episode(&ctx, &params, p.horizon).map_err(runtime)?;
        base_returns.push(b.discounted_return);
        rollout_returns.push(r.discounted_return);
    }
    let w = wall(started.elapsed().as_secs_f64());
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        (m, v.sqrt())
    };
    let (bm, bs) = stats(&base_returns);
    let (rm, rs) = stats(&rollout_returns);
    let wins = base_returns.iter().zip(&rollout_returns).filter(|(b, r)| r > b).count() as f64;
    Ok(vec![
        row(w, p.rollout_episodes, "base_value", bm, bs),
        row(w, p.rollout_episodes, "rollout_value", rm, rs),
        row(w, p.rollout_episodes, "paired_win_rate", wins / p.rollout_episodes as f64, 0.0),
    ])
}

fn run_seed(cfg: &ExperimentConfig, kernel: &ModelKernel, base: u64, record_wall: bool) -> Result<Vec<CurveRow>, ExperimentError> {
    let p = &cfg.algorithm_params;
    let wall = move |s: f64| if record_wall { s } else { 0.0 };
    let game = cfg.model.is_game();
    match cfg.algorithm {
        AlgorithmKind::Spsa if game => run_fp(kernel, ResponderKind::Spsa, p, base, &wall),
        AlgorithmKind::Spsa => run_spsa_threshold(kernel, stops_of(&cfg.model_params), p, base, &wall),
        AlgorithmKind::FictitiousPlay => run_fp(kernel, p.fp.responder, p, base, &wall),
        AlgorithmKind::Pg if game => run_fp(kernel, ResponderKind::Pg, p, base, &wall),
        AlgorithmKind::Pg => run_pg(kernel, p, base, &wall),
        AlgorithmKind::Rollout => run_rollout(kernel, p, base, &wall),
        AlgorithmKind::ThresholdBaseline => {
            let defender = threshold_strategy(p.alpha, stops_of(&cfg.model_params)).map_err(runtime)?;
            let (m, s) = mc(kernel, &defender, &uniform_attacker(kernel), p, seed::derive(base, &[seed::stream::EVAL]))?;
            Ok(vec![row(0.0, 0, "value", m, s)])
        }
        AlgorithmKind::AlertBaseline => {
            let ModelParams::RecoveryPomdp(rc) = &cfg.model_params else {
                return Err(runtime("the alert baseline needs the recovery POMDP"));
            };
            let threshold = p.priority()?;
            let defender = alert_baseline_strategy(rc, threshold, &p.quantiles).map_err(runtime)?;
            let (m, s) = mc(kernel, &defender, &uniform_attacker(kernel), p, seed::derive(base, &[seed::stream::EVAL]))?;
            Ok(vec![row(0.0, 0, "value", m, s)])
        }
    }
}

/// Mean and sample stddev across seeds of each `(round_or_update, metric)`
/// key, in order of first appearance.
pub fn aggregate(per_seed: &[Vec<CurveRow>]) -> Vec<AggregateRow> {
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut values: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for rows in per_seed {
        for r in rows {
            let key = (r.round_or_update, r.metric_name.clone());
            let slot = values.entry(key.clone()).or_default();
            if slot.is_empty() {
                order.push(key);
            }
            slot.push(r.mean);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let xs = &values[&key];
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            AggregateRow { round_or_update: key.0, metric_name: key.1, mean, stddev: var.sqrt(), seeds: xs.len() }
        })
        .collect()
}

fn aggregate_csv(rows: &[AggregateRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["round_or_update", "metric_name", "mean", "stddev", "seeds"]).map_err(runtime)?;
    }
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    let bytes = w.into_inner().map_err(runtime)?;
    String::from_utf8(bytes).map_err(runtime)
}

fn last_values(rows: &[CurveRow]) -> BTreeMap<String, f64> {
    rows.iter().map(|r| (r.metric_name.clone(), r.mean)).collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(runtime)
}

pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, ExperimentError> {
    let mut cfg = config.clone();
    if let Some(seeds) = &opts.seeds {
        if seeds.is_empty() {
            return Err(super::ConfigError::new("seeds", "at least one seed is required").into());
        }
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = &cfg.pairing_warning {
        if !opts.override_pairing {
            log::warn!("{w}");
        }
    }
    let kernel = build_model(&cfg.model_params)?;
    let mut files = Cleanup::new(&cfg.output_dir)?;
    files.write("config.json", &to_json(&cfg)?)?;

    let results = par::with_jobs(opts.jobs, || par::map_slice(&cfg.seeds, |&s| run_seed(&cfg, &kernel, s, opts.record_wall_clock)));
    let per_seed: Vec<Vec<CurveRow>> = results.into_iter().collect::<Result<_, _>>()?;
    for (s, rows) in cfg.seeds.iter().zip(&per_seed) {
        files.write(&format!("seed_{s}.csv"), &curve_to_string(rows))?;
    }
    files.write("aggregate.csv", &aggregate_csv(&aggregate(&per_seed))?)?;

    let per_seed_summary: Vec<SeedSummary> =
        cfg.seeds.iter().zip(&per_seed).map(|(&seed, rows)| SeedSummary { seed, last: last_values(rows) }).collect();
    let mut last_mean: BTreeMap<String, f64> = BTreeMap::new();
    for s in &per_seed_summary {
        for (k, v) in &s.last {
            *last_mean.entry(k.clone()).or_default() += v / per_seed_summary.len() as f64;
        }
    }
    let summary = RunSummary {
        model: cfg.model,
        algorithm: cfg.algorithm,
        output_dir: cfg.output_dir.clone(),
        pairing_warning: cfg.pairing_warning.clone(),
        per_seed: per_seed_summary,
        last_mean,
    };
    files.write("summary.json", &to_json(&summary)?)?;
    files.disarm();
    Ok(summary)
}

fn flow_learner(
    cfg: &SweepConfig,
) -> impl Fn(&ModelKernel, u64) -> Result<Strategy, AnalysisError> + Sync + '_ {
    move |kernel: &ModelKernel, s: u64| {
        let p = &cfg.algorithm_params;
        let stops = cfg.model_params.stops;
        let attacker = uniform_attacker(kernel);
        let search = ThresholdSearch {
            kernel,
            attacker: &attacker,
            make: |a| threshold_strategy(a, stops).expect("sigmoid stays in [0, 1]"),
            episodes: p.episodes_per_eval,
            horizon: p.horizon,
        };
        let out = search.run(p.alpha0, &SpsaParams { seed: s, ..p.spsa.clone() })?;
        Ok(threshold_strategy(out.alpha, stops)?)
    }
}

pub fn run_sweep(config: &SweepConfig, opts: &RunOptions) -> Result<SweepSummary, ExperimentError> {
    let mut cfg = config.clone();
    if let Some(seeds) = &opts.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    let mut files = Cleanup::new(&cfg.output_dir)?;
    files.write("config.json", &to_json(&cfg)?)?;
    let build = |p: f64| Ok(build_flow_pomdp(&FlowPomdpConfig { p, ..cfg.model_params.clone() })?);
    let attacker = Strategy::uniform(build_flow_pomdp(&cfg.model_params).map_err(runtime)?.n_states(), 1);
    let p = &cfg.algorithm_params;
    let rows = par::with_jobs(opts.jobs, || {
        sensitivity_sweep(build, cfg.true_value, &cfg.grid, flow_learner(&cfg), &attacker, p.eval_episodes, p.horizon, &cfg.seeds)
    })
    .map_err(runtime)?;
    files.write("sweep.csv", &sweep_to_csv(&rows).map_err(runtime)?)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.misspecification).collect();
    let sims: Vec<f64> = rows.iter().map(|r| r.sim_mean).collect();
    let truths: Vec<f64> = rows.iter().map(|r| r.truth_mean).collect();
    let spearman_sim = if rows.len() > 1 { spearman(&xs, &sims) } else { f64::NAN };
    let hi = truths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = truths.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = truths.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let truth_spread = if scale > 0.0 { (hi - lo) / scale } else { 0.0 };
    let summary = SweepSummary { output_dir: cfg.output_dir.clone(), rows, spearman_sim, truth_spread };
    files.write("summary.json", &to_json(&summary)?)?;
    files.disarm();
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_matches_hand_computation() {
        let a = vec![row(0.0, 1, "v", 1.0, 0.0), row(0.0, 2, "v", 3.0, 0.0)];
        let b = vec![row(0.0, 1, "v", 3.0, 0.0), row(0.0, 2, "v", 3.0, 0.0)];
        let agg = aggregate(&[a, b]);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].mean, 2.0);
        assert!((agg[0].stddev - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg[1].stddev, 0.0);
        assert_eq!(agg[1].seeds, 2);
    }
}
