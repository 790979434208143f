//! In-memory episode sessions for the strategy debugger.
//!
//! A human plays the defender one step at a time; the attacker is sampled
//! from a fixed strategy. Each session owns its RNG, seeded from the
//! session's seed only, so replaying the same actions with the same seed
//! reproduces the same history bit for bit.
//!
//! Steps on one session are serialized by a mutex. Readers never take it:
//! every step publishes an immutable [`Snapshot`] behind an `Arc`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::decision::{
    advance_belief, sample_index, step, validate_kernel, Belief, InfoState, KernelDocument, ModelKernel, Strategy,
    ValidationReport,
};
use crate::experiment::{build_model, parse_model, ModelKind, ModelParams};
use crate::seed::{self, SimRng};
use crate::usecase::flow::{FlowGameConfig, FlowPomdpConfig};
use crate::usecase::recovery::RecoveryConfig;
use crate::usecase::replication::ReplicationConfig;
use crate::usecase::segmentation::SegmentationConfig;

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebuggerError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid model parameter `{path}`: {detail}")]
    InvalidConfig { path: String, detail: String },
    #[error("uploaded kernel has {} violations", .report.violations.len())]
    InvalidKernel { report: ValidationReport },
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` has reached a terminal state")]
    SessionDone(String),
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("simulation failed: {0}")]
    Internal(String),
}

impl DebuggerError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            DebuggerError::UnknownModel(_) => "unknown_model",
            DebuggerError::InvalidConfig { .. } => "invalid_config",
            DebuggerError::InvalidKernel { .. } => "invalid_kernel",
            DebuggerError::InvalidStrategy(_) => "invalid_strategy",
            DebuggerError::UnknownSession(_) => "unknown_session",
            DebuggerError::SessionDone(_) => "session_done",
            DebuggerError::IllegalAction(_) => "illegal_action",
            DebuggerError::Internal(_) => "internal",
        }
    }

    /// Human-readable detail; for invalid kernels this lists the violations.
    pub fn detail(&self) -> String {
        match self {
            DebuggerError::InvalidKernel { report } => {
                serde_json::to_string(report).unwrap_or_default()
            }
            other => other.to_string(),
        }
    }
}

/// Which model to play: a registered builder with parameters, or an uploaded
/// canonical kernel document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub params: Option<Value>,
    #[serde(default)]
    pub kernel: Option<KernelDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub model: ModelSpec,
    /// Defaults to the uniform attacker.
    #[serde(default)]
    pub attacker: Option<Strategy>,
    /// Optional learned strategy whose choice is shown as `suggested`.
    #[serde(default)]
    pub defender: Option<Strategy>,
    #[serde(default)]
    pub seed: u64,
}

/// A defender action given by index or by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionRef {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Named {
    pub index: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub defender_action: Named,
    pub attacker_action: Named,
    pub observation: Named,
    pub reward: f64,
}

/// What only the attacker (and the true system) knows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackerView {
    pub state: Named,
    pub last_action: Option<Named>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub id: String,
    pub model: String,
    pub seed: u64,
    /// Current step, starting at 1.
    pub t: usize,
    pub done: bool,
    pub states: Vec<String>,
    pub defender_actions: Vec<String>,
    pub belief: Vec<f64>,
    pub observation: Option<Named>,
    pub reward: Option<f64>,
    pub cumulative_reward: f64,
    pub discounted_return: f64,
    pub attacker_view: AttackerView,
    pub suggested: Option<Named>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub default: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub game: bool,
    pub parameters: Vec<FieldSchema>,
}

const REGISTRY: [(ModelKind, &str, &str); 6] = [
    (ModelKind::FlowPomdp, "flow-pomdp", "Flow-control optimal stopping against a random intrusion start"),
    (ModelKind::FlowGame, "flow-game", "Flow-control stopping game against an attacker choosing when to intrude"),
    (ModelKind::SegmentationGame, "segmentation-game", "Zone-based network segmentation game"),
    (ModelKind::ReplicationMdp, "replication-mdp", "Replica count control with an availability penalty"),
    (ModelKind::ReplicationGame, "replication-game", "Replica count control against a crashing attacker"),
    (ModelKind::RecoveryPomdp, "recovery-pomdp", "Per-replica recovery from alert observations"),
];

fn defaults_of(kind: ModelKind) -> Value {
    let v = match kind {
        ModelKind::FlowPomdp => serde_json::to_value(FlowPomdpConfig::default()),
        ModelKind::FlowGame => serde_json::to_value(FlowGameConfig::default()),
        ModelKind::SegmentationGame => serde_json::to_value(SegmentationConfig::default()),
        ModelKind::ReplicationMdp | ModelKind::ReplicationGame => serde_json::to_value(ReplicationConfig::default()),
        ModelKind::RecoveryPomdp => serde_json::to_value(RecoveryConfig::default()),
    };
    v.expect("default configs serialize")
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Registered builders with their parameters and default values.
pub fn registered_models() -> Vec<ModelInfo> {
    REGISTRY
        .iter()
        .map(|&(kind, name, description)| {
            let defaults = defaults_of(kind);
            let parameters = defaults
                .as_object()
                .map(|o| o.iter().map(|(k, v)| FieldSchema { name: k.clone(), kind: json_type(v), default: v.clone() }).collect())
                .unwrap_or_default();
            ModelInfo { name, description, game: kind.is_game(), parameters }
        })
        .collect()
}

fn resolve_model(spec: &ModelSpec) -> Result<(String, ModelKernel), DebuggerError> {
    match (&spec.name, &spec.kernel) {
        (Some(name), None) => {
            let kind = REGISTRY
                .iter()
                .find(|(_, n, _)| n == name)
                .map(|(k, _, _)| *k)
                .ok_or_else(|| DebuggerError::UnknownModel(name.clone()))?;
            let params = spec.params.clone().unwrap_or_else(|| Value::Object(Map::new()));
            let parsed: ModelParams = parse_model(kind, &params)
                .map_err(|e| DebuggerError::InvalidConfig { path: e.path, detail: e.detail })?;
            let kernel = build_model(&parsed).map_err(|e| DebuggerError::InvalidConfig { path: "params".into(), detail: e.to_string() })?;
            Ok((name.clone(), kernel))
        }
        (None, Some(doc)) => {
            let kernel = ModelKernel::from_document(doc.clone())
                .map_err(|e| DebuggerError::InvalidConfig { path: "model.kernel".into(), detail: e.to_string() })?;
            let report = validate_kernel(&kernel);
            if !report.is_valid() {
                return Err(DebuggerError::InvalidKernel { report });
            }
            Ok((kernel.name().to_string(), kernel))
        }
        _ => Err(DebuggerError::UnknownModel("give exactly one of `name` or `kernel`".into())),
    }
}

/// Checks that `strategy` can act in `kernel` with `n_actions` actions.
fn check_fits(kernel: &ModelKernel, strategy: &Strategy, n_actions: usize, who: &str) -> Result<(), DebuggerError> {
    let bad = |m: String| DebuggerError::InvalidStrategy(format!("{who}: {m}"));
    strategy.check().map_err(|e| bad(e.to_string()))?;
    if strategy.n_actions() != n_actions {
        return Err(bad(format!("has {} actions, the model has {n_actions}", strategy.n_actions())));
    }
    match strategy {
        Strategy::Tabular { probs } if probs.len() != kernel.n_states() => {
            Err(bad(format!("has {} rows, the model has {} states", probs.len(), kernel.n_states())))
        }
        Strategy::Threshold { states, .. } if states.iter().any(|&s| s >= kernel.n_states()) => Err(bad("state index out of range".into())),
        Strategy::ObservationLookup { probs, .. } if probs.len() != kernel.n_observations() => {
            Err(bad(format!("has {} rows, the model has {} observations", probs.len(), kernel.n_observations())))
        }
        _ => Ok(()),
    }
}

struct Session {
    id: String,
    model: String,
    seed: u64,
    kernel: Arc<ModelKernel>,
    attacker: Strategy,
    defender: Option<Strategy>,
    rng: SimRng,
    state: usize,
    belief: Belief,
    observation: Option<usize>,
    last_attacker: Option<usize>,
    discount_acc: f64,
    cumulative: f64,
    discounted: f64,
    history: Vec<HistoryEntry>,
}

impl Session {
    fn named(names: &[String], i: usize) -> Named {
        Named { index: i, name: names[i].clone() }
    }

    fn done(&self) -> bool {
        self.kernel.is_terminal(self.state)
    }

    fn suggested(&self) -> Result<Option<Named>, DebuggerError> {
        let Some(def) = &self.defender else { return Ok(None) };
        if self.done() {
            return Ok(None);
        }
        let info = InfoState { state: Some(self.state), belief: Some(self.belief.probs()), observation: self.observation };
        let dist = def.distribution(&info).map_err(|e| DebuggerError::InvalidStrategy(e.to_string()))?;
        let best = dist.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let i = dist.iter().position(|&p| p >= best).unwrap_or(0);
        Ok(Some(Self::named(self.kernel.defender_actions(), i)))
    }

    fn snapshot(&self) -> Result<Snapshot, DebuggerError> {
        let k = &self.kernel;
        Ok(Snapshot {
            id: self.id.clone(),
            model: self.model.clone(),
            seed: self.seed,
            t: self.history.len() + 1,
            done: self.done(),
            states: k.states().to_vec(),
            defender_actions: k.defender_actions().to_vec(),
            belief: self.belief.probs().to_vec(),
            observation: self.observation.map(|o| Self::named(k.observations(), o)),
            reward: self.history.last().map(|h| h.reward),
            cumulative_reward: self.cumulative,
            discounted_return: self.discounted,
            attacker_view: AttackerView {
                state: Self::named(k.states(), self.state),
                last_action: self.last_attacker.map(|a| Self::named(k.attacker_actions(), a)),
            },
            suggested: self.suggested()?,
            history: self.history.clone(),
        })
    }

    fn resolve_action(&self, action: &ActionRef) -> Result<usize, DebuggerError> {
        let names = self.kernel.defender_actions();
        match action {
            ActionRef::Index(i) if *i < names.len() => Ok(*i),
            ActionRef::Index(i) => Err(DebuggerError::IllegalAction(format!("index {i} is outside 0..{}", names.len()))),
            ActionRef::Name(n) => self
                .kernel
                .defender_action_index(n)
                .ok_or_else(|| DebuggerError::IllegalAction(format!("`{n}` is not one of {names:?}"))),
        }
    }

    fn advance(&mut self, action: &ActionRef) -> Result<(), DebuggerError> {
        if self.done() {
            return Err(DebuggerError::SessionDone(self.id.clone()));
        }
        let d = self.resolve_action(action)?;
        let k = Arc::clone(&self.kernel);
        let internal = |e: crate::decision::DecisionError| DebuggerError::Internal(e.to_string());
        let a = sample_index(&self.attacker.at_state(self.state, k.n_states()).map_err(internal)?, &mut self.rng);
        let st = step(&k, self.state, d, a, &mut self.rng);
        self.belief = advance_belief(&k, &self.attacker, &self.belief, d, st.observation).map_err(internal)?;
        self.cumulative += st.reward;
        self.discounted += self.discount_acc * st.reward;
        self.discount_acc *= k.discount();
        self.history.push(HistoryEntry {
            defender_action: Self::named(k.defender_actions(), d),
            attacker_action: Self::named(k.attacker_actions(), a),
            observation: Self::named(k.observations(), st.observation),
            reward: st.reward,
        });
        self.state = st.next_state;
        self.observation = Some(st.observation);
        self.last_attacker = Some(a);
        Ok(())
    }
}

struct Slot {
    session: Mutex<Session>,
    published: RwLock<Arc<Snapshot>>,
    last_used: Mutex<Instant>,
}

impl Slot {
    fn touch(&self) {
        *self.last_used.lock().expect("poisoned") = Instant::now();
    }
}

/// Thread-safe session registry.
pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    ttl: Duration,
    counter: AtomicU64,
}

impl Default for SessionManager {
    fn default() -> Self {
        Self::new(DEFAULT_TTL)
    }
}

impl SessionManager {
    pub fn new(ttl: Duration) -> Self {
        Self { sessions: RwLock::new(HashMap::new()), ttl, counter: AtomicU64::new(0) }
    }

    pub fn models(&self) -> Vec<ModelInfo> {
        registered_models()
    }

    fn fresh_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
        format!("{:016x}", seed::derive(nanos, &[n]))
    }

    /// Drops sessions idle for longer than the TTL.
    pub fn evict_expired(&self) -> usize {
        let mut map = self.sessions.write().expect("poisoned");
        let before = map.len();
        map.retain(|_, slot| slot.last_used.lock().expect("poisoned").elapsed() < self.ttl);
        before - map.len()
    }

    pub fn create(&self, req: CreateRequest) -> Result<Arc<Snapshot>, DebuggerError> {
        self.evict_expired();
        let (model, kernel) = resolve_model(&req.model)?;
        let attacker = req.attacker.unwrap_or_else(|| Strategy::uniform(kernel.n_states(), kernel.n_attacker_actions()));
        check_fits(&kernel, &attacker, kernel.n_attacker_actions(), "attacker")?;
        if matches!(attacker, Strategy::Threshold { .. } | Strategy::ObservationLookup { .. }) {
            return Err(DebuggerError::InvalidStrategy("attacker: must be defined on states".into()));
        }
        if let Some(d) = &req.defender {
            check_fits(&kernel, d, kernel.n_defender_actions(), "defender")?;
        }
        let mut rng = seed::rng(seed::derive(req.seed, &[seed::stream::SESSION]));
        let state = sample_index(kernel.initial_belief(), &mut rng);
        let belief = Belief::new(kernel.initial_belief().to_vec()).map_err(|e| DebuggerError::Internal(e.to_string()))?;
        let id = self.fresh_id();
        let session = Session {
            id: id.clone(),
            model,
            seed: req.seed,
            kernel: Arc::new(kernel),
            attacker,
            defender: req.defender,
            rng,
            state,
            belief,
            observation: None,
            last_attacker: None,
            discount_acc: 1.0,
            cumulative: 0.0,
            discounted: 0.0,
            history: Vec::new(),
        };
        let snap = Arc::new(session.snapshot()?);
        let slot = Arc::new(Slot { session: Mutex::new(session), published: RwLock::new(Arc::clone(&snap)), last_used: Mutex::new(Instant::now()) });
        self.sessions.write().expect("poisoned").insert(id, slot);
        Ok(snap)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, DebuggerError> {
        self.sessions.read().expect("poisoned").get(id).cloned().ok_or_else(|| DebuggerError::UnknownSession(id.to_string()))
    }

    /// Applies one defender action. Concurrent steps on the same session wait
    /// for each other.
    pub fn step(&self, id: &str, action: &ActionRef) -> Result<Arc<Snapshot>, DebuggerError> {
        let slot = self.slot(id)?;
        slot.touch();
        let mut session = slot.session.lock().expect("poisoned");
        session.advance(action)?;
        let snap = Arc::new(session.snapshot()?);
        *slot.published.write().expect("poisoned") = Arc::clone(&snap);
        Ok(snap)
    }

    /// Latest published snapshot; never waits for a running step.
    pub fn snapshot(&self, id: &str) -> Result<Arc<Snapshot>, DebuggerError> {
        let slot = self.slot(id)?;
        slot.touch();
        let snap = Arc::clone(&slot.published.read().expect("poisoned"));
        Ok(snap)
    }

    pub fn delete(&self, id: &str) -> Result<(), DebuggerError> {
        self.sessions.write().expect("poisoned").remove(id).map(|_| ()).ok_or_else(|| DebuggerError::UnknownSession(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
