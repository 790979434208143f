//! Clipped-surrogate policy gradient with GAE, an entropy bonus, a value
//! loss, global gradient-norm clipping and Adam.
//!
//! The learner plays one side of a kernel against a fixed opponent strategy.
//! Rewards are taken in the learner's own convention (the attacker sees `-r`).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{FeatureMap, PolicyNet};
use super::LearningError;
use crate::decision::{
    advance_belief, monte_carlo_value, sample_index, step, Belief, EpisodeSpec, InfoState, ModelKernel, Player,
    Strategy,
};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureChoice {
    State,
    Belief,
    Observation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgParams {
    pub learning_rate: f64,
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    pub steps_between_updates: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub epochs: usize,
    pub updates: usize,
    /// Episode truncation length during training and evaluation.
    pub horizon: usize,
    pub eval_episodes: usize,
    pub features: FeatureChoice,
    pub seed: u64,
}

impl Default for PgParams {
    fn default() -> Self {
        Self {
            learning_rate: 5.148e-5,
            hidden_layers: 1,
            neurons_per_layer: 64,
            steps_between_updates: 2048,
            batch_size: 16,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            entropy_coef: 2e-4,
            value_coef: 0.102,
            max_grad_norm: 0.5,
            epochs: 10,
            updates: 20,
            horizon: 200,
            eval_episodes: 100,
            features: FeatureChoice::State,
            seed: 0,
        }
    }
}

impl PgParams {
    pub fn validate(&self) -> Result<(), LearningError> {
        let bad = |m: &str| Err(LearningError::InvalidParams(m.to_string()));
        if self.hidden_layers != 1 {
            return bad("only one hidden layer per head is supported");
        }
        if self.neurons_per_layer == 0 || self.batch_size == 0 || self.steps_between_updates == 0 || self.epochs == 0 {
            return bad("neurons_per_layer, batch_size, steps_between_updates and epochs must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad("clip_range must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma must lie in [0, 1) and gae_lambda in [0, 1]");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        Ok(())
    }
}

/// One stored transition after advantage estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoSample {
    pub x: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Loss and gradient of one minibatch. Advantages are standardized within
/// the batch when it holds more than one sample.
pub fn ppo_loss_and_grad(net: &PolicyNet, batch: &[PpoSample], params: &PgParams) -> (f64, Vec<f64>) {
    let m = batch.len() as f64;
    let mean_adv = batch.iter().map(|s| s.advantage).sum::<f64>() / m;
    let std_adv = if batch.len() > 1 {
        (batch.iter().map(|s| (s.advantage - mean_adv).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut grad = vec![0.0; net.n_params()];
    let mut loss = 0.0;
    let eps = params.clip_range;
    for s in batch {
        let adv = if batch.len() > 1 { (s.advantage - mean_adv) / (std_adv + 1e-8) } else { s.advantage };
        let f = net.forward(&s.x);
        let ratio = (f.log_probs[s.action] - s.old_log_prob).exp();
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        let entropy: f64 = -f.probs.iter().zip(&f.log_probs).map(|(p, lp)| p * lp).sum::<f64>();
        let verr = f.value - s.ret;
        loss += -surr1.min(surr2) - params.entropy_coef * entropy + params.value_coef * verr * verr;

        let unclipped = surr1 <= surr2;
        let dlogits: Vec<f64> = (0..f.probs.len())
            .map(|k| {
                let pi = f.probs[k];
                let pg = if unclipped { -adv * ratio * ((k == s.action) as u8 as f64 - pi) } else { 0.0 };
                let ent = params.entropy_coef * pi * (f.log_probs[k] + entropy);
                (pg + ent) / m
            })
            .collect();
        net.backward(&f, &dlogits, 2.0 * params.value_coef * verr / m, &mut grad);
    }
    (loss / m, grad)
}

#[derive(Clone, Debug)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-5;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

struct Env<'a> {
    kernel: &'a ModelKernel,
    opponent: &'a Strategy,
    player: Player,
    features: FeatureMap,
    horizon: usize,
    state: usize,
    belief: Option<Belief>,
    observation: Option<usize>,
    t: usize,
}

impl<'a> Env<'a> {
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), LearningError> {
        self.state = sample_index(self.kernel.initial_belief(), rng);
        self.belief = match self.features {
            FeatureMap::Belief { .. } => Some(Belief::new(self.kernel.initial_belief().to_vec())?),
            _ => None,
        };
        self.observation = None;
        self.t = 0;
        Ok(())
    }

    fn encode(&self) -> Result<Vec<f64>, LearningError> {
        let info = InfoState {
            state: Some(self.state),
            belief: self.belief.as_ref().map(|b| b.probs()),
            observation: self.observation,
        };
        Ok(self.features.encode(&info)?)
    }

    /// Returns `(reward, terminal, truncated)`.
    fn step<R: Rng + ?Sized>(&mut self, x: usize, rng: &mut R) -> Result<(f64, bool, bool), LearningError> {
        let ns = self.kernel.n_states();
        let y = sample_index(&self.opponent.at_state(self.state, ns)?, rng);
        let (d, a, sign) = match self.player {
            Player::Defender => (x, y, 1.0),
            Player::Attacker => (y, x, -1.0),
        };
        let st = step(self.kernel, self.state, d, a, rng);
        if let Some(b) = &self.belief {
            self.belief = Some(advance_belief(self.kernel, self.opponent, b, d, st.observation)?);
        }
        self.state = st.next_state;
        self.observation = Some(st.observation);
        self.t += 1;
        let terminal = self.kernel.is_terminal(self.state);
        Ok((sign * st.reward, terminal, !terminal && self.t >= self.horizon))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PgPoint {
    pub update: usize,
    /// Wall-clock time since training started; not reproducible.
    pub elapsed_seconds: f64,
    pub env_steps: usize,
    pub eval_mean: f64,
    pub eval_stddev: f64,
}

#[derive(Clone, Debug)]
pub struct PgResult {
    pub strategy: Strategy,
    pub curve: Vec<PgPoint>,
}

fn feature_map(kernel: &ModelKernel, choice: FeatureChoice, player: Player) -> Result<FeatureMap, LearningError> {
    let map = match choice {
        FeatureChoice::State => FeatureMap::OneHotState { n: kernel.n_states() },
        FeatureChoice::Belief => FeatureMap::Belief { n: kernel.n_states() },
        FeatureChoice::Observation => FeatureMap::OneHotObservation { n: kernel.n_observations() },
    };
    if player == Player::Attacker && choice != FeatureChoice::State {
        return Err(LearningError::InvalidParams("the attacker learner acts on the state".into()));
    }
    Ok(map)
}

/// Evaluation value of `strategy` for `player` against `opponent`, in the
/// player's own convention.
pub fn evaluate_learner(
    kernel: &ModelKernel,
    strategy: &Strategy,
    opponent: &Strategy,
    player: Player,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64), LearningError> {
    let (defender, attacker, sign) = match player {
        Player::Defender => (strategy, opponent, 1.0),
        Player::Attacker => (opponent, strategy, -1.0),
    };
    let est = monte_carlo_value(&EpisodeSpec { kernel, defender, attacker, horizon }, episodes, seed)?;
    Ok((sign * est.mean, est.stddev))
}

/// Trains a fresh network for `player` against the fixed `opponent`.
pub fn pg_train(kernel: &ModelKernel, opponent: &Strategy, player: Player, params: &PgParams) -> Result<PgResult, LearningError> {
    pg_train_from(kernel, opponent, player, params, None)
}

/// Like [`pg_train`], optionally warm-starting from `init`.
pub fn pg_train_from(
    kernel: &ModelKernel,
    opponent: &Strategy,
    player: Player,
    params: &PgParams,
    init: Option<PolicyNet>,
) -> Result<PgResult, LearningError> {
    params.validate()?;
    let features = feature_map(kernel, params.features, player)?;
    let n_actions = match player {
        Player::Defender => kernel.n_defender_actions(),
        Player::Attacker => kernel.n_attacker_actions(),
    };
    let mut net = match init {
        Some(net) if net.features() == &features && net.n_actions() == n_actions && net.hidden() == params.neurons_per_layer => net,
        _ => {
            let mut init_rng = seed::rng(seed::derive(params.seed, &[seed::stream::INIT]));
            PolicyNet::new(features.clone(), params.neurons_per_layer, n_actions, &mut init_rng)
        }
    };
    let mut rng = seed::rng(seed::derive(params.seed, &[seed::stream::TRAIN]));
    let mut adam = Adam::new(net.n_params(), params.learning_rate);
    let mut env = Env {
        kernel,
        opponent,
        player,
        features,
        horizon: params.horizon,
        state: 0,
        belief: None,
        observation: None,
        t: 0,
    };
    env.reset(&mut rng)?;
    let started = std::time::Instant::now();
    let mut curve = Vec::with_capacity(params.updates);
    let n = params.steps_between_updates;
    let mut env_steps = 0;
    for update in 0..params.updates {
        // Collection.
        let mut xs = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut logps = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let mut next_values = Vec::with_capacity(n);
        let mut terminal = Vec::with_capacity(n);
        let mut cut = Vec::with_capacity(n);
        let mut x = env.encode()?;
        for t in 0..n {
            let f = net.forward(&x);
            let action = sample_index(&f.probs, &mut rng);
            let (r, done, truncated) = env.step(action, &mut rng)?;
            xs.push(x);
            actions.push(action);
            logps.push(f.log_probs[action]);
            values.push(f.value);
            rewards.push(r);
            terminal.push(done);
            let next_x = env.encode()?;
            next_values.push(if done { 0.0 } else { net.forward(&next_x).value });
            cut.push(done || truncated || t + 1 == n);
            if done || truncated {
                env.reset(&mut rng)?;
                x = env.encode()?;
            } else {
                x = next_x;
            }
        }
        env_steps += n;

        // GAE, cutting the recursion at episode ends and at the buffer end.
        let mut adv = vec![0.0; n];
        let mut running = 0.0;
        for t in (0..n).rev() {
            if cut[t] {
                running = 0.0;
            }
            let delta = rewards[t] + params.gamma * next_values[t] - values[t];
            running = delta + params.gamma * params.gae_lambda * running;
            adv[t] = running;
        }
        let samples: Vec<PpoSample> = (0..n)
            .map(|t| PpoSample {
                x: std::mem::take(&mut xs[t]),
                action: actions[t],
                old_log_prob: logps[t],
                advantage: adv[t],
                ret: adv[t] + values[t],
            })
            .collect();

        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(params.batch_size) {
                let batch: Vec<PpoSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                let (loss, mut grad) = ppo_loss_and_grad(&net, &batch, params);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(LearningError::NonFiniteLoss { update });
                }
                clip_grad_norm(&mut grad, params.max_grad_norm);
                adam.step(net.params_mut(), &grad);
            }
        }

        let strategy = Strategy::Parametric { net: net.clone() };
        let eval_seed = seed::derive(params.seed, &[seed::stream::EVAL, update as u64]);
        let (eval_mean, eval_stddev) =
            evaluate_learner(kernel, &strategy, opponent, player, params.horizon, params.eval_episodes, eval_seed)?;
        curve.push(PgPoint { update, elapsed_seconds: started.elapsed().as_secs_f64(), env_steps, eval_mean, eval_stddev });
    }
    Ok(PgResult { strategy: Strategy::Parametric { net }, curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(net: &PolicyNet) -> Vec<PpoSample> {
        let xs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = net.forward(x);
                // old log-probs shifted so some ratios fall outside the clip range
                let shift = [0.05, -0.5, 0.4, 0.0][i];
                PpoSample {
                    x: x.to_vec(),
                    action: i % 2,
                    old_log_prob: f.log_probs[i % 2] + shift,
                    advantage: [1.0, -2.0, 0.5, 3.0][i],
                    ret: [0.3, -1.0, 2.0, 0.0][i],
                }
            })
            .collect()
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut rng = seed::rng(9);
        let net = PolicyNet::new(FeatureMap::OneHotState { n: 3 }, 8, 2, &mut rng);
        let b = batch(&net);
        let params = PgParams { entropy_coef: 0.01, ..PgParams::default() };
        let (_, grad) = ppo_loss_and_grad(&net, &b, &params);
        for i in 0..net.n_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += 1e-6;
            let mut minus = net.clone();
            minus.params_mut()[i] -= 1e-6;
            let fd = (ppo_loss_and_grad(&plus, &b, &params).0 - ppo_loss_and_grad(&minus, &b, &params).0) / 2e-6;
            let tol = 1e-4 * fd.abs().max(grad[i].abs()).max(1e-3);
            assert!((fd - grad[i]).abs() <= tol, "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g.iter().map(|x| x * x).sum::<f64>().sqrt() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn deeper_networks_are_rejected() {
        assert!(PgParams { hidden_layers: 2, ..PgParams::default() }.validate().is_err());
    }
}
