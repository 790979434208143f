//! Network segmentation game on a tree of nodes rooted at the gateway.
//!
//! Each node carries an attacker class (`0` undiscovered, `1` discovered,
//! `2` compromised) and a zone. Joint states, actions and observations are
//! mixed-radix numbers with node 0 as the least significant digit.
//!
//! Local attacker actions are `⊥`, reconnoiter and compromise; compromising
//! an undiscovered node is infeasible (marked in the kernel's feasibility
//! mask and a no-op if played anyway). The local defender action
//! recover-and-migrate resets the node's attacker class and moves it to the
//! next zone label.

use serde::{Deserialize, Serialize};

use super::{check_discount, check_distribution, invalid, UsecaseError};
use crate::decision::{KernelParts, ModelKernel, Row};

pub const DEFAULT_NODE_CAP: usize = 5;
pub const DEFAULT_ROW_CAP: usize = 250_000;

const CLASSES: usize = 3;
const ATTACKER_LOCAL: usize = 3;
const RECON: usize = 1;
const COMPROMISE: usize = 2;

/// Tree of nodes hanging off the gateway, split into workflows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfraGraph {
    pub nodes: Vec<String>,
    /// Parent of each node; `None` means the gateway.
    pub parent: Vec<Option<usize>>,
    pub workflows: Vec<Vec<usize>>,
    pub zones: Vec<String>,
    pub initial_zone: Vec<usize>,
    /// Zone in which nodes are inactive, if any.
    #[serde(default)]
    pub shutdown_zone: Option<usize>,
}

impl Default for InfraGraph {
    fn default() -> Self {
        Self {
            nodes: vec!["web".into(), "app".into(), "mail".into()],
            parent: vec![None, Some(0), None],
            workflows: vec![vec![0, 1], vec![2]],
            zones: vec!["zone-a".into(), "zone-b".into()],
            initial_zone: vec![0, 0, 0],
            shutdown_zone: None,
        }
    }
}

impl InfraGraph {
    pub fn from_json(text: &str) -> Result<Self, UsecaseError> {
        let g: Self = serde_json::from_str(text).map_err(|e| UsecaseError::FileFormat(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), UsecaseError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(invalid("graph needs at least one node"));
        }
        if self.parent.len() != n || self.initial_zone.len() != n {
            return Err(invalid("parent and initial_zone need one entry per node"));
        }
        if self.zones.is_empty() {
            return Err(invalid("at least one zone is required"));
        }
        if self.initial_zone.iter().any(|&z| z >= self.zones.len()) {
            return Err(invalid("initial zone out of range"));
        }
        if let Some(z) = self.shutdown_zone {
            if z >= self.zones.len() {
                return Err(invalid("shutdown zone out of range"));
            }
        }
        for i in 0..n {
            // Walking up must reach the gateway within n steps.
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.parent[cur] {
                if p >= n {
                    return Err(invalid(format!("parent of node {i} out of range")));
                }
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(invalid("parent relation has a cycle; it must be a tree rooted at the gateway"));
                }
            }
        }
        let mut owner = vec![None; n];
        for (w, members) in self.workflows.iter().enumerate() {
            for &i in members {
                if i >= n {
                    return Err(invalid(format!("workflow {w} names unknown node {i}")));
                }
                if owner[i].replace(w).is_some() {
                    return Err(invalid(format!("node {i} belongs to more than one workflow")));
                }
            }
        }
        if owner.iter().any(Option::is_none) {
            return Err(invalid("every node must belong to a workflow"));
        }
        for i in 0..n {
            if let Some(p) = self.parent[i] {
                if owner[p] != owner[i] {
                    return Err(invalid(format!("workflow of node {i} is not a subtree (parent {p} differs)")));
                }
            }
        }
        Ok(())
    }

    pub fn is_active(&self, zone: usize) -> bool {
        self.shutdown_zone != Some(zone)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub graph: InfraGraph,
    pub eta: f64,
    pub gamma: f64,
    pub p_recon: f64,
    pub p_compromise: f64,
    /// Alert-level distribution per attacker class (three rows). One table
    /// shared by every node, or one table per node.
    pub alert_model: Vec<Vec<Vec<f64>>>,
    pub node_cap: usize,
    pub row_cap: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            graph: InfraGraph::default(),
            eta: 1.0,
            gamma: 0.99,
            p_recon: 1.0,
            p_compromise: 0.8,
            alert_model: vec![vec![vec![0.7, 0.2, 0.1], vec![0.4, 0.4, 0.2], vec![0.1, 0.3, 0.6]]],
            node_cap: DEFAULT_NODE_CAP,
            row_cap: DEFAULT_ROW_CAP,
        }
    }
}

/// Mixed-radix layout of the joint spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentationLayout {
    pub nodes: usize,
    pub zones: usize,
    pub levels: usize,
}

impl SegmentationLayout {
    pub fn local_states(&self) -> usize {
        CLASSES * self.zones
    }
    pub fn n_states(&self) -> usize {
        self.local_states().pow(self.nodes as u32)
    }
    pub fn n_defender_actions(&self) -> usize {
        1 << self.nodes
    }
    pub fn n_attacker_actions(&self) -> usize {
        ATTACKER_LOCAL.pow(self.nodes as u32)
    }
    pub fn n_observations(&self) -> usize {
        self.levels.pow(self.nodes as u32)
    }

    /// `(class, zone)` per node.
    pub fn decode_state(&self, s: usize) -> Vec<(usize, usize)> {
        let mut rest = s;
        (0..self.nodes)
            .map(|_| {
                let local = rest % self.local_states();
                rest /= self.local_states();
                (local / self.zones, local % self.zones)
            })
            .collect()
    }

    pub fn encode_state(&self, nodes: &[(usize, usize)]) -> usize {
        nodes.iter().rev().fold(0, |acc, &(c, z)| acc * self.local_states() + c * self.zones + z)
    }

    pub fn decode_attack(&self, a: usize) -> Vec<usize> {
        let mut rest = a;
        (0..self.nodes)
            .map(|_| {
                let d = rest % ATTACKER_LOCAL;
                rest /= ATTACKER_LOCAL;
                d
            })
            .collect()
    }

    pub fn decode_observation(&self, o: usize) -> Vec<usize> {
        let mut rest = o;
        (0..self.nodes)
            .map(|_| {
                let d = rest % self.levels;
                rest /= self.levels;
                d
            })
            .collect()
    }
}

impl SegmentationConfig {
    pub fn layout(&self) -> SegmentationLayout {
        SegmentationLayout {
            nodes: self.graph.nodes.len(),
            zones: self.graph.zones.len(),
            levels: self.alert_model.first().and_then(|t| t.first()).map_or(0, Vec::len),
        }
    }

    fn alert_table(&self, node: usize) -> &[Vec<f64>] {
        if self.alert_model.len() == 1 {
            &self.alert_model[0]
        } else {
            &self.alert_model[node]
        }
    }

    pub fn validate(&self) -> Result<(), UsecaseError> {
        self.graph.validate()?;
        let n = self.graph.nodes.len();
        if n > self.node_cap {
            return Err(UsecaseError::DimensionCap { what: "|V|", value: n, cap: self.node_cap });
        }
        if !(self.eta >= 0.0) {
            return Err(invalid("eta must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.p_recon) || !(0.0..=1.0).contains(&self.p_compromise) {
            return Err(invalid("attack success probabilities must lie in [0, 1]"));
        }
        check_discount(self.gamma)?;
        if self.alert_model.len() != 1 && self.alert_model.len() != n {
            return Err(invalid("alert_model needs one shared table or one per node"));
        }
        let levels = self.layout().levels;
        for (i, table) in self.alert_model.iter().enumerate() {
            if table.len() != CLASSES {
                return Err(invalid(format!("alert table {i} needs one row per attacker class")));
            }
            for row in table {
                if row.len() != levels {
                    return Err(invalid("alert tables must share one level count"));
                }
                check_distribution("alert row", row)?;
            }
        }
        let layout = self.layout();
        let rows = layout.n_states() * layout.n_defender_actions() * layout.n_attacker_actions();
        if rows > self.row_cap {
            return Err(UsecaseError::DimensionCap { what: "transition rows", value: rows, cap: self.row_cap });
        }
        Ok(())
    }

    /// `u_i`: node `i` and all its ancestors are active and not compromised.
    fn utility(&self, nodes: &[(usize, usize)], i: usize) -> bool {
        let mut cur = Some(i);
        while let Some(j) = cur {
            let (c, z) = nodes[j];
            if c == 2 || !self.graph.is_active(z) {
                return false;
            }
            cur = self.graph.parent[j];
        }
        true
    }

    /// `Σ_i (η u_i - v^I_i - c^A(a_i^D))` with unit cost per recovery.
    pub fn step_reward(&self, nodes: &[(usize, usize)], defender: usize) -> f64 {
        (0..nodes.len())
            .map(|i| {
                let u = if self.utility(nodes, i) { 1.0 } else { 0.0 };
                let intruded = if nodes[i].0 == 2 { 1.0 } else { 0.0 };
                node_contribution(self.eta, u, intruded, ((defender >> i) & 1) as f64)
            })
            .sum()
    }

    fn local_successors(&self, (c, z): (usize, usize), recover: bool, attack: usize, zones: usize) -> [(usize, usize, f64); 2] {
        if recover {
            return [(0, (z + 1) % zones, 1.0), (0, 0, 0.0)];
        }
        match (c, attack) {
            (0, RECON) => [(1, z, self.p_recon), (0, z, 1.0 - self.p_recon)],
            (1, COMPROMISE) => [(2, z, self.p_compromise), (1, z, 1.0 - self.p_compromise)],
            _ => [(c, z, 1.0), (0, 0, 0.0)],
        }
    }
}

/// One node's term `η u - (v^I + c^A)`.
pub fn node_contribution(eta: f64, utility: f64, intruded: f64, action_cost: f64) -> f64 {
    eta * utility - (intruded + action_cost)
}

fn state_name(layout: &SegmentationLayout, s: usize) -> String {
    layout.decode_state(s).iter().map(|(c, z)| format!("{c}{z}")).collect::<Vec<_>>().join(".")
}

pub fn build_segmentation_game(cfg: &SegmentationConfig) -> Result<ModelKernel, UsecaseError> {
    cfg.validate()?;
    let layout = cfg.layout();
    let (ns, nd, na, no) = (layout.n_states(), layout.n_defender_actions(), layout.n_attacker_actions(), layout.n_observations());
    let base: Vec<usize> = (0..layout.nodes).map(|i| layout.local_states().pow(i as u32)).collect();

    let mut transition: Vec<Row> = Vec::with_capacity(ns * nd * na);
    let mut reward = Vec::with_capacity(ns * nd * na);
    let mut feasible = Vec::with_capacity(ns * na);
    let attacks: Vec<Vec<usize>> = (0..na).map(|a| layout.decode_attack(a)).collect();
    for s in 0..ns {
        let nodes = layout.decode_state(s);
        for attack in &attacks {
            feasible.push(nodes.iter().zip(attack).all(|(&(c, _), &x)| x != COMPROMISE || c >= 1));
        }
        for d in 0..nd {
            let r = cfg.step_reward(&nodes, d);
            for attack in &attacks {
                let mut row: Row = vec![(0, 1.0)];
                for i in 0..layout.nodes {
                    let succ = cfg.local_successors(nodes[i], (d >> i) & 1 == 1, attack[i], layout.zones);
                    let mut next = Vec::with_capacity(row.len() * 2);
                    for &(m, p) in &row {
                        for &(c, z, q) in &succ {
                            if q > 0.0 {
                                next.push((m + (c * layout.zones + z) * base[i], p * q));
                            }
                        }
                    }
                    row = next;
                }
                transition.push(row);
                reward.push(r);
            }
        }
    }

    let mut observation = Vec::with_capacity(ns * no);
    for s in 0..ns {
        let nodes = layout.decode_state(s);
        for o in 0..no {
            let levels = layout.decode_observation(o);
            observation.push((0..layout.nodes).map(|i| cfg.alert_table(i)[nodes[i].0][levels[i]]).product());
        }
    }
    let initial: Vec<(usize, usize)> = cfg.graph.initial_zone.iter().map(|&z| (0, z)).collect();
    let mut initial_belief = vec![0.0; ns];
    initial_belief[layout.encode_state(&initial)] = 1.0;

    let defender_actions = (0..nd).map(|d| (0..layout.nodes).map(|i| if (d >> i) & 1 == 1 { 'M' } else { '-' }).collect()).collect();
    let attacker_actions = attacks.iter().map(|a| a.iter().map(|&x| ['-', 'R', 'C'][x]).collect()).collect();
    Ok(ModelKernel::new(KernelParts {
        name: "segmentation-game".into(),
        states: (0..ns).map(|s| state_name(&layout, s)).collect(),
        defender_actions,
        attacker_actions,
        observations: (0..no).map(|o| layout.decode_observation(o).iter().map(|l| l.to_string()).collect::<Vec<_>>().join(".")).collect(),
        transition,
        reward,
        observation,
        discount: cfg.gamma,
        initial_belief,
        terminal: None,
        attacker_feasible: Some(feasible),
    })?)
}
