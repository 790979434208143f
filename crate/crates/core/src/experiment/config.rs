//! Config parsing with field-path errors.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::baselines::{priority_index, DEFAULT_QUANTILES, MEDIUM};
use super::ConfigError;
use crate::learning::fictitious::FpParams;
use crate::learning::ppo::{FeatureChoice, PgParams};
use crate::learning::rollout::RolloutParams;
use crate::learning::spsa::SpsaParams;
use crate::usecase::flow::{FlowGameConfig, FlowPomdpConfig};
use crate::usecase::recovery::RecoveryConfig;
use crate::usecase::replication::ReplicationConfig;
use crate::usecase::segmentation::SegmentationConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FlowPomdp,
    FlowGame,
    SegmentationGame,
    ReplicationMdp,
    ReplicationGame,
    RecoveryPomdp,
}

impl ModelKind {
    pub fn is_game(self) -> bool {
        matches!(self, ModelKind::FlowGame | ModelKind::SegmentationGame | ModelKind::ReplicationGame)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    Spsa,
    Rollout,
    Pg,
    FictitiousPlay,
    ThresholdBaseline,
    AlertBaseline,
}

/// The learner each model is paired with by default.
pub fn expected_algorithm(model: ModelKind) -> AlgorithmKind {
    match model {
        ModelKind::FlowPomdp => AlgorithmKind::Spsa,
        ModelKind::ReplicationMdp | ModelKind::ReplicationGame => AlgorithmKind::Pg,
        ModelKind::RecoveryPomdp => AlgorithmKind::Rollout,
        ModelKind::FlowGame | ModelKind::SegmentationGame => AlgorithmKind::FictitiousPlay,
    }
}

fn pairing_is_expected(model: ModelKind, algorithm: AlgorithmKind) -> bool {
    match algorithm {
        AlgorithmKind::ThresholdBaseline => matches!(model, ModelKind::FlowPomdp | ModelKind::FlowGame),
        AlgorithmKind::AlertBaseline => model == ModelKind::RecoveryPomdp,
        _ => expected_algorithm(model) == algorithm,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelParams {
    FlowPomdp(FlowPomdpConfig),
    FlowGame(FlowGameConfig),
    SegmentationGame(SegmentationConfig),
    ReplicationMdp(ReplicationConfig),
    ReplicationGame(ReplicationConfig),
    RecoveryPomdp(RecoveryConfig),
}

/// Every knob any algorithm reads; unused blocks are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmParams {
    pub spsa: SpsaParams,
    pub rollout: RolloutParams,
    pub pg: PgParams,
    pub fp: FpParams,
    /// Network input for the policy-gradient learner; defaults to the belief
    /// on POMDPs and the state otherwise.
    pub features: Option<FeatureChoice>,
    /// Threshold used by the threshold baseline.
    pub alpha: f64,
    /// Starting threshold for SPSA.
    pub alpha0: f64,
    /// Alert baseline: recover at this priority or above.
    pub priority_threshold: String,
    pub quantiles: Vec<f64>,
    /// Monte-Carlo episodes per noisy SPSA objective call.
    pub episodes_per_eval: usize,
    /// Episodes per evaluation checkpoint.
    pub eval_episodes: usize,
    /// SPSA iterations between evaluation checkpoints.
    pub eval_every: usize,
    /// Episode truncation length.
    pub horizon: usize,
    /// Episodes played by the rollout policy and its base.
    pub rollout_episodes: usize,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            spsa: SpsaParams::default(),
            rollout: RolloutParams::default(),
            pg: PgParams::default(),
            fp: FpParams::default(),
            features: None,
            alpha: 0.75,
            alpha0: 0.5,
            priority_threshold: "medium".into(),
            quantiles: DEFAULT_QUANTILES.to_vec(),
            episodes_per_eval: 50,
            eval_episodes: 1000,
            eval_every: 10,
            horizon: 1000,
            rollout_episodes: 20,
        }
    }
}

impl AlgorithmParams {
    pub fn priority(&self) -> Result<usize, ConfigError> {
        priority_index(&self.priority_threshold).ok_or_else(|| {
            ConfigError::new("algorithm_params.priority_threshold", format!("unknown priority `{}`", self.priority_threshold))
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let p = |f: &str| format!("algorithm_params.{f}");
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::new(p("alpha"), "must lie in [0, 1]"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 < 1.0) {
            return Err(ConfigError::new(p("alpha0"), "must lie in (0, 1)"));
        }
        for (name, v) in [
            ("episodes_per_eval", self.episodes_per_eval),
            ("eval_episodes", self.eval_episodes),
            ("eval_every", self.eval_every),
            ("horizon", self.horizon),
            ("rollout_episodes", self.rollout_episodes),
        ] {
            if v == 0 {
                return Err(ConfigError::new(p(name), "must be positive"));
            }
        }
        if self.quantiles.windows(2).any(|w| w[1] <= w[0]) || self.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(ConfigError::new(p("quantiles"), "must be increasing values in [0, 1]"));
        }
        self.priority()?;
        let _ = MEDIUM;
        self.spsa.validate().map_err(|e| ConfigError::new(p("spsa"), e.to_string()))?;
        self.pg.validate().map_err(|e| ConfigError::new(p("pg"), e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub model_params: ModelParams,
    pub algorithm: AlgorithmKind,
    pub algorithm_params: AlgorithmParams,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Set when the model/algorithm pairing differs from the default one.
    #[serde(skip)]
    pub pairing_warning: Option<String>,
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, ConfigError> {
    obj.get(key).ok_or_else(|| ConfigError::new(key, "missing required field"))
}

fn reject_unknown(obj: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<(), ConfigError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ConfigError::new(join(prefix, k), format!("unknown field; expected one of {allowed:?}"))),
        None => Ok(()),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Deserializes a defaults-filled block, naming the first offending key.
fn parse_block<T: DeserializeOwned>(value: &Value, path: &str) -> Result<T, ConfigError> {
    let obj = value.as_object().ok_or_else(|| ConfigError::new(path, "expected an object"))?;
    match serde_json::from_value::<T>(value.clone()) {
        Ok(t) => Ok(t),
        Err(whole) => {
            for (k, v) in obj {
                let mut single = Map::new();
                single.insert(k.clone(), v.clone());
                if let Err(e) = serde_json::from_value::<T>(Value::Object(single)) {
                    return Err(ConfigError::new(join(path, k), e.to_string()));
                }
            }
            Err(ConfigError::new(path, whole.to_string()))
        }
    }
}

fn parse_enum<T: DeserializeOwned>(value: &Value, path: &str) -> Result<T, ConfigError> {
    serde_json::from_value(value.clone()).map_err(|e| ConfigError::new(path, e.to_string()))
}

pub(crate) fn parse_model(model: ModelKind, value: &Value) -> Result<ModelParams, ConfigError> {
    let path = "model_params";
    let params = match model {
        ModelKind::FlowPomdp => {
            let c: FlowPomdpConfig = parse_block(value, path)?;
            c.validate().map_err(|e| ConfigError::new(path, e.to_string()))?;
            ModelParams::FlowPomdp(c)
        }
        ModelKind::FlowGame => {
            let c: FlowGameConfig = parse_block(value, path)?;
            c.validate().map_err(|e| ConfigError::new(path, e.to_string()))?;
            ModelParams::FlowGame(c)
        }
        ModelKind::SegmentationGame => {
            let c: SegmentationConfig = parse_block(value, path)?;
            c.validate().map_err(|e| ConfigError::new(path, e.to_string()))?;
            ModelParams::SegmentationGame(c)
        }
        ModelKind::ReplicationMdp | ModelKind::ReplicationGame => {
            let c: ReplicationConfig = parse_block(value, path)?;
            c.validate().map_err(|e| ConfigError::new(path, e.to_string()))?;
            if model == ModelKind::ReplicationMdp {
                ModelParams::ReplicationMdp(c)
            } else {
                ModelParams::ReplicationGame(c)
            }
        }
        ModelKind::RecoveryPomdp => {
            let c: RecoveryConfig = parse_block(value, path)?;
            c.validate().map_err(|e| ConfigError::new(path, e.to_string()))?;
            ModelParams::RecoveryPomdp(c)
        }
    };
    Ok(params)
}

fn parse_seeds(value: &Value) -> Result<Vec<u64>, ConfigError> {
    let seeds: Vec<u64> = parse_enum(value, "seeds")?;
    if seeds.is_empty() {
        return Err(ConfigError::new("seeds", "at least one seed is required"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(ConfigError::new("seeds", "seeds must be distinct"));
    }
    Ok(seeds)
}

fn check_runnable(model: ModelKind, algorithm: AlgorithmKind) -> Result<(), ConfigError> {
    let ok = match algorithm {
        AlgorithmKind::Spsa => model == ModelKind::FlowPomdp || model.is_game(),
        AlgorithmKind::Rollout => !model.is_game(),
        AlgorithmKind::Pg => true,
        AlgorithmKind::FictitiousPlay => model.is_game(),
        AlgorithmKind::ThresholdBaseline => matches!(model, ModelKind::FlowPomdp | ModelKind::FlowGame),
        AlgorithmKind::AlertBaseline => model == ModelKind::RecoveryPomdp,
    };
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new("algorithm", format!("{algorithm:?} cannot run on {model:?}")))
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::new("", e.to_string()))?;
    let obj = doc.as_object().ok_or_else(|| ConfigError::new("", "expected a JSON object"))?;
    reject_unknown(obj, "", &["model", "model_params", "algorithm", "algorithm_params", "seeds", "output_dir"])?;
    let model: ModelKind = parse_enum(field(obj, "model")?, "model")?;
    let model_params = parse_model(model, field(obj, "model_params")?)?;
    let algorithm: AlgorithmKind = parse_enum(field(obj, "algorithm")?, "algorithm")?;
    let algorithm_params: AlgorithmParams = match obj.get("algorithm_params") {
        Some(v) => parse_block(v, "algorithm_params")?,
        None => AlgorithmParams::default(),
    };
    algorithm_params.validate()?;
    let seeds = parse_seeds(field(obj, "seeds")?)?;
    let output_dir: PathBuf = parse_enum(field(obj, "output_dir")?, "output_dir")?;
    check_runnable(model, algorithm)?;
    let pairing_warning = (!pairing_is_expected(model, algorithm)).then(|| {
        format!("{model:?} is normally paired with {:?}, running {algorithm:?} anyway", expected_algorithm(model))
    });
    Ok(ExperimentConfig { model, model_params, algorithm, algorithm_params, seeds, output_dir, pairing_warning })
}

/// Sensitivity sweep over the intrusion-start probability `p` of the flow
/// POMDP. Strategies are SPSA thresholds learned on each misspecified model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub model_params: FlowPomdpConfig,
    /// The true `p`; the grid values are the misspecified ones.
    pub true_value: f64,
    pub grid: Vec<f64>,
    pub algorithm_params: AlgorithmParams,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

pub fn parse_sweep_config(text: &str) -> Result<SweepConfig, ConfigError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::new("", e.to_string()))?;
    let obj = doc.as_object().ok_or_else(|| ConfigError::new("", "expected a JSON object"))?;
    reject_unknown(obj, "", &["model", "model_params", "parameter", "true_value", "grid", "algorithm_params", "seeds", "output_dir"])?;
    let model: ModelKind = parse_enum(field(obj, "model")?, "model")?;
    if model != ModelKind::FlowPomdp {
        return Err(ConfigError::new("model", "sweeps are implemented for flow-pomdp"));
    }
    if let Some(p) = obj.get("parameter") {
        if p.as_str() != Some("p") {
            return Err(ConfigError::new("parameter", "only `p` can be swept"));
        }
    }
    let model_params: FlowPomdpConfig = parse_block(field(obj, "model_params")?, "model_params")?;
    model_params.validate().map_err(|e| ConfigError::new("model_params", e.to_string()))?;
    let true_value = match obj.get("true_value") {
        Some(v) => parse_enum(v, "true_value")?,
        None => model_params.p,
    };
    let grid: Vec<f64> = parse_enum(field(obj, "grid")?, "grid")?;
    if grid.is_empty() || grid.iter().chain(std::iter::once(&true_value)).any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(ConfigError::new("grid", "needs at least one value, all values and true_value in (0, 1)"));
    }
    let algorithm_params: AlgorithmParams = match obj.get("algorithm_params") {
        Some(v) => parse_block(v, "algorithm_params")?,
        None => AlgorithmParams::default(),
    };
    algorithm_params.validate()?;
    let seeds = parse_seeds(field(obj, "seeds")?)?;
    let output_dir: PathBuf = parse_enum(field(obj, "output_dir")?, "output_dir")?;
    Ok(SweepConfig { model_params, true_value, grid, algorithm_params, seeds, output_dir })
}
