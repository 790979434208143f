//! Small actor-critic network: one tanh hidden layer feeding a softmax action
//! head, plus a separate tanh hidden layer feeding a linear value head.
//! Parameters live in one flat vector so optimizers and finite-difference
//! checks can treat them uniformly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decision::{DecisionError, InfoState};

/// How an information state is turned into network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMap {
    OneHotState { n: usize },
    Belief { n: usize },
    OneHotObservation { n: usize },
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match *self {
            FeatureMap::OneHotState { n } | FeatureMap::Belief { n } | FeatureMap::OneHotObservation { n } => n,
        }
    }

    pub fn encode(&self, info: &InfoState<'_>) -> Result<Vec<f64>, DecisionError> {
        match *self {
            FeatureMap::OneHotState { n } => {
                let s = info.state.ok_or(DecisionError::MissingInformation("the state"))?;
                one_hot(n, s)
            }
            FeatureMap::Belief { n } => {
                let b = info.belief.ok_or(DecisionError::MissingInformation("a belief"))?;
                if b.len() != n {
                    return Err(DecisionError::Shape(format!("belief of length {} for {n} features", b.len())));
                }
                Ok(b.to_vec())
            }
            FeatureMap::OneHotObservation { n } => match info.observation {
                Some(o) => one_hot(n, o),
                None => Ok(vec![0.0; n]),
            },
        }
    }
}

fn one_hot(n: usize, i: usize) -> Result<Vec<f64>, DecisionError> {
    if i >= n {
        return Err(DecisionError::Shape(format!("index {i} out of range for {n} features")));
    }
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    Ok(v)
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    input: usize,
    hidden: usize,
    actions: usize,
}

impl Layout {
    fn pw1(&self) -> usize {
        0
    }
    fn pb1(&self) -> usize {
        self.hidden * self.input
    }
    fn pw2(&self) -> usize {
        self.pb1() + self.hidden
    }
    fn pb2(&self) -> usize {
        self.pw2() + self.actions * self.hidden
    }
    fn vw1(&self) -> usize {
        self.pb2() + self.actions
    }
    fn vb1(&self) -> usize {
        self.vw1() + self.hidden * self.input
    }
    fn vw2(&self) -> usize {
        self.vb1() + self.hidden
    }
    fn vb2(&self) -> usize {
        self.vw2() + self.hidden
    }
    fn total(&self) -> usize {
        self.vb2() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    features: FeatureMap,
    hidden: usize,
    n_actions: usize,
    params: Vec<f64>,
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub hv: Vec<f64>,
    pub value: f64,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(features: FeatureMap, hidden: usize, n_actions: usize, rng: &mut R) -> Self {
        let layout = Layout { input: features.dim(), hidden, actions: n_actions };
        let mut params = vec![0.0; layout.total()];
        let mut fill = |start: usize, len: usize, fan_in: usize, gain: f64, rng: &mut R| {
            let scale = gain / (fan_in.max(1) as f64).sqrt();
            for p in &mut params[start..start + len] {
                let z: f64 = StandardNormal.sample(rng);
                *p = z * scale;
            }
        };
        let (i, h, a) = (layout.input, hidden, n_actions);
        fill(layout.pw1(), h * i, i, std::f64::consts::SQRT_2, rng);
        fill(layout.pw2(), a * h, h, 0.01, rng);
        fill(layout.vw1(), h * i, i, std::f64::consts::SQRT_2, rng);
        fill(layout.vw2(), h, h, 1.0, rng);
        Self { features, hidden, n_actions, params }
    }

    fn layout(&self) -> Layout {
        Layout { input: self.features.dim(), hidden: self.hidden, actions: self.n_actions }
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn hidden(&self) -> usize {
        self.hidden
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        let l = self.layout();
        let p = &self.params;
        let hidden_layer = |w: usize, b: usize| -> Vec<f64> {
            (0..l.hidden)
                .map(|j| {
                    let row = &p[w + j * l.input..w + (j + 1) * l.input];
                    let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + p[b + j];
                    z.tanh()
                })
                .collect()
        };
        let h = hidden_layer(l.pw1(), l.pb1());
        let logits: Vec<f64> = (0..l.actions)
            .map(|k| {
                let row = &p[l.pw2() + k * l.hidden..l.pw2() + (k + 1) * l.hidden];
                row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + p[l.pb2() + k]
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        let hv = hidden_layer(l.vw1(), l.vb1());
        let value = p[l.vw2()..l.vw2() + l.hidden].iter().zip(&hv).map(|(a, b)| a * b).sum::<f64>() + p[l.vb2()];
        Forward { x: x.to_vec(), h, probs, log_probs, hv, value }
    }

    /// Accumulates `dL/dθ` into `grad` given `dL/dlogits` and `dL/dvalue`.
    pub fn backward(&self, fwd: &Forward, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        let l = self.layout();
        let p = &self.params;
        let mut dh = vec![0.0; l.hidden];
        for (k, &g) in dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[l.pb2() + k] += g;
            let w = l.pw2() + k * l.hidden;
            for j in 0..l.hidden {
                grad[w + j] += g * fwd.h[j];
                dh[j] += g * p[w + j];
            }
        }
        for j in 0..l.hidden {
            let dz = dh[j] * (1.0 - fwd.h[j] * fwd.h[j]);
            if dz == 0.0 {
                continue;
            }
            grad[l.pb1() + j] += dz;
            let w = l.pw1() + j * l.input;
            for (i, &xi) in fwd.x.iter().enumerate() {
                grad[w + i] += dz * xi;
            }
        }
        if dvalue != 0.0 {
            grad[l.vb2()] += dvalue;
            for j in 0..l.hidden {
                grad[l.vw2() + j] += dvalue * fwd.hv[j];
                let dz = dvalue * p[l.vw2() + j] * (1.0 - fwd.hv[j] * fwd.hv[j]);
                grad[l.vb1() + j] += dz;
                let w = l.vw1() + j * l.input;
                for (i, &xi) in fwd.x.iter().enumerate() {
                    grad[w + i] += dz * xi;
                }
            }
        }
    }

    pub fn action_probs(&self, info: &InfoState<'_>) -> Result<Vec<f64>, DecisionError> {
        let x = self.features.encode(info)?;
        Ok(self.forward(&x).probs)
    }
}
