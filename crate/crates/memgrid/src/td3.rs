//! Twin-delayed deep deterministic policy gradient (TD3) on the dispatch
//! MDP: clipped double-Q targets, target policy smoothing, and delayed
//! actor updates over the from-scratch network stack.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::config::{SystemConfig, Td3Config};
use crate::environment::{
    denormalize_action, ActionBoxes, DayProfile, EnvError, MicrogridEnv, MicrogridObservation,
    Policy,
};
use crate::neural::{
    adam_step_network, soft_update, Activation, AdamState, DenseNetwork, LayerSpec, Matrix,
};

#[derive(Debug, Error)]
pub enum Td3Error {
    #[error("environment error: {0}")]
    Env(#[from] EnvError),
    #[error("training diverged at episode {episode}: {what}")]
    Diverged { episode: usize, what: &'static str },
    #[error("replay buffer capacity must be positive")]
    ZeroCapacity,
}

/// One stored interaction. Observations are scaled, actions normalized to
/// [-1, 1], rewards already multiplied by the reward scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO replay buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, Td3Error> {
        if capacity == 0 {
            return Err(Td3Error::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            data: Vec::with_capacity(capacity.min(4096)),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Insert, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform sample of `n` transitions, with replacement.
    pub fn sample_indices<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.data.len())).collect()
    }
}

/// Scales raw observations into a roughly unit-range feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ObservationScaler {
    pub wt_scale: f64,
    pub pv_scale: f64,
    pub p_load_scale: f64,
    pub h_load_scale: f64,
    pub q_load_scale: f64,
    pub price_scale: f64,
    pub horizon: usize,
}

fn col_max(v: &[f64]) -> f64 {
    v.iter().cloned().fold(1.0_f64, f64::max)
}

impl ObservationScaler {
    pub fn from_profile(cfg: &SystemConfig, profile: &DayProfile) -> Self {
        Self {
            wt_scale: cfg.renewables.wt_rated_kw.max(1.0),
            pv_scale: cfg.renewables.pv_rated_kw.max(1.0),
            p_load_scale: col_max(&profile.p_load_kw),
            h_load_scale: col_max(&profile.h_load_kw),
            q_load_scale: col_max(&profile.q_load_kw),
            price_scale: col_max(&profile.price_e_per_kwh),
            horizon: profile.len(),
        }
    }

    pub const DIM: usize = 10;

    pub fn scale(&self, obs: &MicrogridObservation) -> Vec<f64> {
        vec![
            obs.wt_power / self.wt_scale,
            obs.pv_power / self.pv_scale,
            obs.p_load / self.p_load_scale,
            obs.h_load / self.h_load_scale,
            obs.q_load / self.q_load_scale,
            obs.price_e / self.price_scale,
            obs.soc_ess,
            obs.soc_tss,
            obs.soc_css,
            obs.hour_index as f64 / self.horizon.max(1) as f64,
        ]
    }
}

/// Clipped double-Q backup for one transition.
pub fn target_value(reward: f64, gamma: f64, q1: f64, q2: f64, terminal: bool) -> f64 {
    let mask = if terminal { 0.0 } else { 1.0 };
    reward + gamma * mask * q1.min(q2)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_updated: bool,
}

/// Actor, twin critics, and their target copies.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub actor: DenseNetwork,
    pub actor_target: DenseNetwork,
    pub critic1: DenseNetwork,
    pub critic2: DenseNetwork,
    pub critic1_target: DenseNetwork,
    pub critic2_target: DenseNetwork,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    pub config: Td3Config,
    pub obs_dim: usize,
    pub act_dim: usize,
    update_count: u64,
}

fn mlp(in_dim: usize, hidden: &[usize], out: LayerSpec, rng: &mut impl Rng) -> DenseNetwork {
    let mut specs: Vec<LayerSpec> = hidden
        .iter()
        .map(|&d| LayerSpec::new(d, Activation::Relu))
        .collect();
    specs.push(out);
    DenseNetwork::new(in_dim, &specs, rng)
}

impl Td3Agent {
    pub fn new(obs_dim: usize, act_dim: usize, config: &Td3Config, rng: &mut impl Rng) -> Self {
        let actor = mlp(
            obs_dim,
            &config.hidden_dims,
            LayerSpec::new(act_dim, Activation::Tanh),
            rng,
        );
        let critic1 = mlp(
            obs_dim + act_dim,
            &config.hidden_dims,
            LayerSpec::new(1, Activation::Identity),
            rng,
        );
        let critic2 = mlp(
            obs_dim + act_dim,
            &config.hidden_dims,
            LayerSpec::new(1, Activation::Identity),
            rng,
        );
        let actor_opt = AdamState::new(config.actor_lr, 0.9, 0.999, actor.param_count());
        let critic1_opt = AdamState::new(config.critic_lr, 0.9, 0.999, critic1.param_count());
        let critic2_opt = AdamState::new(config.critic_lr, 0.9, 0.999, critic2.param_count());
        Self {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            actor_opt,
            critic1_opt,
            critic2_opt,
            config: config.clone(),
            obs_dim,
            act_dim,
            update_count: 0,
        }
    }

    /// Deterministic policy output in [-1, 1]^act_dim.
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        let out = self
            .actor
            .forward_eval(&Matrix::row_vector(obs))
            .expect("actor forward");
        out.row(0).to_vec()
    }

    /// Exploration action: policy output plus clipped Gaussian noise.
    pub fn act_noisy<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, self.config.exploration_noise).expect("noise sigma");
        self.act(obs)
            .into_iter()
            .map(|a| (a + normal.sample(rng)).clamp(-1.0, 1.0))
            .collect()
    }

    fn batch_matrices(&self, buffer: &ReplayBuffer, indices: &[usize]) -> (Matrix, Matrix, Matrix) {
        let n = indices.len();
        let mut obs = Matrix::zeros(n, self.obs_dim);
        let mut act = Matrix::zeros(n, self.act_dim);
        let mut next_obs = Matrix::zeros(n, self.obs_dim);
        for (r, &i) in indices.iter().enumerate() {
            let t = buffer.get(i);
            for c in 0..self.obs_dim {
                obs.set(r, c, t.obs[c]);
                next_obs.set(r, c, t.next_obs[c]);
            }
            for c in 0..self.act_dim {
                act.set(r, c, t.action[c]);
            }
        }
        (obs, act, next_obs)
    }

    /// Target-policy actions with clipped smoothing noise applied.
    pub fn smoothed_target_actions<R: Rng>(&self, next_obs: &Matrix, rng: &mut R) -> Matrix {
        let mut next_act = self
            .actor_target
            .forward_eval(next_obs)
            .expect("target actor forward");
        if self.config.smoothing_sigma > 0.0 {
            let normal = Normal::new(0.0, self.config.smoothing_sigma).expect("smoothing sigma");
            let c = self.config.smoothing_clip;
            for v in &mut next_act.data {
                let eps = normal.sample(rng).clamp(-c, c);
                *v = (*v + eps).clamp(-1.0, 1.0);
            }
        }
        next_act
    }

    /// Backup values for a batch: smoothed target action, clipped double Q.
    pub fn compute_targets<R: Rng>(
        &self,
        buffer: &ReplayBuffer,
        indices: &[usize],
        next_obs: &Matrix,
        rng: &mut R,
    ) -> Vec<f64> {
        let next_act = self.smoothed_target_actions(next_obs, rng);
        let sa = next_obs.hcat(&next_act);
        let q1 = self.critic1_target.forward_eval(&sa).expect("critic1 target");
        let q2 = self.critic2_target.forward_eval(&sa).expect("critic2 target");
        indices
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let t = buffer.get(i);
                target_value(t.reward, self.config.gamma, q1.get(r, 0), q2.get(r, 0), t.terminal)
            })
            .collect()
    }

    fn critic_step(
        critic: &mut DenseNetwork,
        opt: &mut AdamState,
        sa: &Matrix,
        targets: &[f64],
    ) -> f64 {
        let cache = critic.forward_train(sa).expect("critic forward");
        let q = cache.output().clone();
        let n = targets.len() as f64;
        let mut upstream = Matrix::zeros(q.rows, 1);
        let mut loss = 0.0;
        for r in 0..q.rows {
            let diff = q.get(r, 0) - targets[r];
            loss += diff * diff / n;
            upstream.set(r, 0, 2.0 * diff / n);
        }
        let (grads, _) = critic.backward(&cache, &upstream);
        adam_step_network(critic, &grads, opt);
        loss
    }

    /// One TD3 update from a sampled minibatch. Actor and targets move only
    /// every `policy_delay` calls.
    pub fn update<R: Rng>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> UpdateStats {
        let indices = buffer.sample_indices(rng, self.config.batch_size.min(buffer.len()));
        self.update_batch(buffer, &indices, rng)
    }

    /// One TD3 update on a caller-chosen minibatch.
    pub fn update_batch<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        indices: &[usize],
        rng: &mut R,
    ) -> UpdateStats {
        let (obs, act, next_obs) = self.batch_matrices(buffer, indices);
        let targets = self.compute_targets(buffer, indices, &next_obs, rng);

        let sa = obs.hcat(&act);
        let l1 = Self::critic_step(&mut self.critic1, &mut self.critic1_opt, &sa, &targets);
        let l2 = Self::critic_step(&mut self.critic2, &mut self.critic2_opt, &sa, &targets);

        self.update_count += 1;
        let mut actor_updated = false;
        if self.update_count % self.config.policy_delay as u64 == 0 {
            self.actor_step(&obs);
            soft_update(&mut self.actor_target, &self.actor, self.config.tau);
            soft_update(&mut self.critic1_target, &self.critic1, self.config.tau);
            soft_update(&mut self.critic2_target, &self.critic2, self.config.tau);
            actor_updated = true;
        }
        UpdateStats {
            critic_loss: 0.5 * (l1 + l2),
            actor_updated,
        }
    }

    /// Deterministic policy gradient: ascend Q1(s, pi(s)).
    fn actor_step(&mut self, obs: &Matrix) {
        let actor_cache = self.actor.forward_train(obs).expect("actor forward");
        let actions = actor_cache.output().clone();
        let sa = obs.hcat(&actions);
        let critic_cache = self.critic1.forward_train(&sa).expect("critic forward");
        let n = obs.rows as f64;
        // Loss is -mean(Q); upstream for the critic input-gradient pass.
        let mut upstream = Matrix::zeros(obs.rows, 1);
        for r in 0..obs.rows {
            upstream.set(r, 0, -1.0 / n);
        }
        let (_, d_input) = self.critic1.backward(&critic_cache, &upstream);
        let d_action = d_input.columns(self.obs_dim, self.obs_dim + self.act_dim);
        let (actor_grads, _) = self.actor.backward(&actor_cache, &d_action);
        adam_step_network(&mut self.actor, &actor_grads, &mut self.actor_opt);
    }

    pub fn params_finite(&self) -> bool {
        self.actor.params_finite()
            && self.critic1.params_finite()
            && self.critic2.params_finite()
            && self.actor_target.params_finite()
            && self.critic1_target.params_finite()
            && self.critic2_target.params_finite()
    }
}

/// Policy adapter: trained actor plus scaler, usable anywhere a
/// [`Policy`] is expected.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub actor: DenseNetwork,
    pub scaler: ObservationScaler,
    pub boxes: ActionBoxes,
}

impl Policy for ActorPolicy {
    fn act(&mut self, obs: &MicrogridObservation) -> crate::environment::DispatchAction {
        let scaled = self.scaler.scale(obs);
        let out = self
            .actor
            .forward_eval(&Matrix::row_vector(&scaled))
            .expect("actor forward");
        let row = out.row(0);
        let mut raw = [0.0; 5];
        raw.copy_from_slice(&row[..5]);
        denormalize_action(&raw, &self.boxes)
    }
}

/// Per-episode training curve entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub total_reward: f64,
    pub energy_cost: f64,
    pub carbon_cost: f64,
    pub penalty_cost: f64,
}

#[derive(Debug)]
pub struct TrainingResult {
    pub agent: Td3Agent,
    pub scaler: ObservationScaler,
    pub curve: Vec<EpisodeStats>,
}

/// Run TD3 training on one environment for a fixed number of episodes.
///
/// Every step before `warmup` total steps takes a uniform random action.
/// After warmup, each environment step is followed by `updates_per_step`
/// gradient updates. Rewards in the buffer carry the configured scale;
/// the returned curve reports unscaled sums.
pub fn train_td3(
    env: &mut MicrogridEnv,
    cfg: &SystemConfig,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingResult, Td3Error> {
    let td3 = &cfg.td3;
    let scaler = ObservationScaler::from_profile(cfg, env.profile());
    let mut agent = Td3Agent::new(ObservationScaler::DIM, 5, td3, rng);
    let mut buffer = ReplayBuffer::new(td3.buffer_capacity)?;
    let boxes = *env.boxes();
    let mut curve = Vec::with_capacity(episodes);
    let mut total_steps = 0usize;

    for episode in 0..episodes {
        env.reset();
        let mut stats = EpisodeStats {
            episode,
            total_reward: 0.0,
            energy_cost: 0.0,
            carbon_cost: 0.0,
            penalty_cost: 0.0,
        };
        while !env.done() {
            let obs = env.observe();
            let scaled = scaler.scale(&obs);
            let raw: Vec<f64> = if total_steps < td3.warmup {
                (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()
            } else {
                agent.act_noisy(&scaled, rng)
            };
            let mut arr = [0.0; 5];
            arr.copy_from_slice(&raw);
            let action = denormalize_action(&arr, &boxes);
            let outcome = env.step(&action)?;
            let next_scaled = scaler.scale(&outcome.next_observation);
            buffer.push(Transition {
                obs: scaled,
                action: raw,
                reward: outcome.reward * td3.reward_scale,
                next_obs: next_scaled,
                terminal: outcome.terminal,
            });
            stats.total_reward += outcome.reward;
            stats.energy_cost += outcome.energy_cost;
            stats.carbon_cost += outcome.carbon_cost;
            stats.penalty_cost += outcome.penalty_cost;
            total_steps += 1;
            if total_steps >= td3.warmup && buffer.len() >= td3.batch_size {
                for _ in 0..td3.updates_per_step {
                    agent.update(&buffer, rng);
                }
            }
        }
        if !agent.params_finite() {
            return Err(Td3Error::Diverged {
                episode,
                what: "non-finite network parameters",
            });
        }
        curve.push(stats);
    }
    Ok(TrainingResult { agent, scaler, curve })
}
