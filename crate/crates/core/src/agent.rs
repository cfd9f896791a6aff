//! Actor with an ensemble of critics, trained off-policy on hindsight-relabeled
//! replay plus a fixed demonstration set.
//!
//! One training iteration runs `critic_updates_per_iter` critic steps (fresh
//! batches each), one actor step and one Polyak update of every target.
//!
//! Critic target: `y = r + γ · min(Q'_i, Q'_j)(s', ã)` for one uniformly drawn
//! pair `i ≠ j` of target critics per update, shared by the whole batch, with
//! `ã = clip(π'(s') + clip(N(0, smooth_std), ±smooth_clip), ±1)`. Episodes
//! never terminate early, so the bootstrap always applies.
//!
//! Actor loss:
//!
//! ```text
//! L = −q_weight · mean_replay(Q̄(s, π(s))) + bc_weight · Σ_demo p · ‖π(s_d) − a_d‖²
//! ```
//!
//! with `Q̄` the ensemble mean and `p` the demo weight of the configured rule,
//! recomputed from the current networks at every step and held constant in the
//! gradient.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvSpec, GoalObs, Transition};
use crate::nn::{self, mlp_shapes, Activation, NetworkDoc, OptState, ParamGrads, ParamSet};
use crate::replay::{obs_goal, Normalizer, ReplayBuffer, CLIP_NORMALIZED};
use crate::rng::{self, Rng, Stream};
use crate::weighting::WeightConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub tau: f64,
    /// Replay mini-batch size.
    pub replay_batch: usize,
    /// Demonstration mini-batch size.
    pub demo_batch: usize,
    /// Weight on the Q term of the actor loss.
    pub q_weight: f64,
    /// Weight on the summed behaviour-cloning term.
    pub bc_weight: f64,
    pub explore_std: f64,
    pub smooth_std: f64,
    pub smooth_clip: f64,
    pub critic_updates_per_iter: usize,
    pub ensemble_size: usize,
    pub hidden_width: usize,
    pub weighting: WeightConfig,
    pub use_demos: bool,
    /// Environment steps collected with uniform random actions before any
    /// update.
    pub warmup_steps: usize,
    /// Training iterations after each collected episode; `None` means one per
    /// environment step (the horizon).
    pub updates_per_episode: Option<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            lr: 1e-3,
            tau: 1e-3,
            replay_batch: 1024,
            demo_batch: 128,
            q_weight: 1e-3,
            bc_weight: 1.0 / 128.0,
            explore_std: 0.1,
            smooth_std: 0.2,
            smooth_clip: 0.5,
            critic_updates_per_iter: 2,
            ensemble_size: 10,
            hidden_width: 64,
            weighting: WeightConfig::default(),
            use_demos: true,
            warmup_steps: 10 * 1024,
            updates_per_episode: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("q_weight", self.q_weight),
            ("bc_weight", self.bc_weight),
            ("explore_std", self.explore_std),
            ("smooth_std", self.smooth_std),
            ("smooth_clip", self.smooth_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if self.ensemble_size < 2 {
            return fail(format!("ensemble_size must be at least 2, got {}", self.ensemble_size));
        }
        if self.replay_batch == 0 || self.hidden_width == 0 || self.critic_updates_per_iter == 0 {
            return fail("replay_batch, hidden_width and critic_updates_per_iter must be positive".into());
        }
        if self.use_demos && self.demo_batch == 0 {
            return fail("demo_batch must be positive when demonstrations are used".into());
        }
        self.weighting.validate()
    }

    pub fn updates_per_episode(&self, spec: &EnvSpec) -> usize {
        self.updates_per_episode.unwrap_or(spec.horizon)
    }
}

/// Normalized network inputs for a set of transitions.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `obs ⊕ desired_goal`, normalized; `(n, obs_dim + goal_dim)`.
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    /// `next_obs ⊕ desired_goal`, normalized.
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn concat(&self, other: &Batch) -> Batch {
        let cat = |a: &Array2<f64>, b: &Array2<f64>| ndarray::concatenate![Axis(0), *a, *b];
        Batch {
            states: cat(&self.states, &other.states),
            actions: cat(&self.actions, &other.actions),
            rewards: ndarray::concatenate![Axis(0), self.rewards, other.rewards],
            next_states: cat(&self.next_states, &other.next_states),
        }
    }
}

/// `[states | actions]` column concatenation.
pub fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate![Axis(1), states, actions]
}

#[derive(Debug, Clone)]
pub struct ActorUpdate {
    pub loss: f64,
    /// Per-demo weights used in this step (empty without demos).
    pub weights: Vec<f64>,
}

impl ActorUpdate {
    pub fn mean_weight(&self) -> Option<f64> {
        if self.weights.is_empty() {
            None
        } else {
            Some(self.weights.iter().sum::<f64>() / self.weights.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IterationMetrics {
    pub critic_losses: Vec<f64>,
    pub actor_loss: f64,
    pub mean_weight: Option<f64>,
}

/// Random streams consumed by training updates.
#[derive(Debug, Clone)]
pub struct TrainRngs {
    pub batch: Rng,
    pub target: Rng,
    pub weights: Rng,
}

impl TrainRngs {
    pub fn from_master(seed: u64) -> Self {
        Self {
            batch: rng::stream(seed, Stream::BatchSampling),
            target: rng::stream(seed, Stream::TargetCritics),
            weights: rng::stream(seed, Stream::Weights),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub config: AgentConfig,
    pub spec: EnvSpec,
    pub actor: ParamSet,
    pub actor_target: ParamSet,
    pub actor_opt: OptState,
    pub critics: Vec<ParamSet>,
    pub critic_targets: Vec<ParamSet>,
    pub critic_opts: Vec<OptState>,
    pub normalizer: Normalizer,
}

impl Agent {
    pub fn new(spec: &EnvSpec, config: AgentConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let input = spec.input_dim();
        let hidden = [config.hidden_width, config.hidden_width];
        let actor = ParamSet::init(
            &mlp_shapes(input, &hidden, spec.action_dim),
            Activation::TanhOutput,
            rng::derive_seed(seed, Stream::Init, 0),
        )?;
        let critic_shapes = mlp_shapes(input + spec.action_dim, &hidden, 1);
        let critics = (0..config.ensemble_size)
            .map(|i| ParamSet::init(&critic_shapes, Activation::LinearOutput, rng::derive_seed(seed, Stream::Init, 1 + i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            actor_target: actor.clone(),
            actor_opt: OptState::new(&actor),
            actor,
            critic_targets: critics.clone(),
            critic_opts: critics.iter().map(OptState::new).collect(),
            critics,
            normalizer: Normalizer::new(input),
            spec: spec.clone(),
            config,
        })
    }

    pub fn ensemble_size(&self) -> usize {
        self.critics.len()
    }

    /// Normalizes one `obs ⊕ goal` row in place. Before any statistics exist
    /// the raw values are only clipped.
    fn normalize_row(&self, row: &mut [f64]) -> Result<()> {
        if self.normalizer.count == 0 {
            row.iter_mut().for_each(|v| *v = v.clamp(-CLIP_NORMALIZED, CLIP_NORMALIZED));
            Ok(())
        } else {
            self.normalizer.normalize_in_place(row)
        }
    }

    pub fn normalized_input(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        let mut row = obs_goal(obs, goal);
        self.normalize_row(&mut row)?;
        Ok(row)
    }

    pub fn batch<'a>(&self, transitions: impl IntoIterator<Item = &'a Transition>) -> Result<Batch> {
        let ts: Vec<&Transition> = transitions.into_iter().collect();
        let n = ts.len();
        let input = self.spec.input_dim();
        let act = self.spec.action_dim;
        let mut states = Array2::zeros((n, input));
        let mut next_states = Array2::zeros((n, input));
        let mut actions = Array2::zeros((n, act));
        let mut rewards = Array1::zeros(n);
        for (k, t) in ts.iter().enumerate() {
            let s = self.normalized_input(&t.obs, &t.desired_goal)?;
            let ns = self.normalized_input(&t.next_obs, &t.desired_goal)?;
            if t.action.len() != act {
                return Err(Error::DimMismatch {
                    what: "transition action",
                    expected: act,
                    got: t.action.len(),
                });
            }
            states.row_mut(k).assign(&Array1::from(s));
            next_states.row_mut(k).assign(&Array1::from(ns));
            actions.row_mut(k).assign(&Array1::from(t.action.clone()));
            rewards[k] = t.reward;
        }
        Ok(Batch {
            states,
            actions,
            rewards,
            next_states,
        })
    }

    /// Deterministic actor output, optionally with clipped Gaussian
    /// exploration noise. The returned action always lies in `[-1, 1]`.
    pub fn select_action(&self, obs: &GoalObs, explore: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        let x = self.normalized_input(&obs.obs, &obs.desired_goal)?;
        let (mut a, _) = self.actor.forward(&x)?;
        if explore && self.config.explore_std > 0.0 {
            let noise = Normal::new(0.0, self.config.explore_std).expect("std > 0");
            for v in &mut a {
                *v += noise.sample(rng).clamp(-1.0, 1.0);
            }
        }
        a.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        Ok(a)
    }

    /// Q-values of every critic (online or target) at the given inputs,
    /// `(m, n)`.
    pub fn ensemble_q(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>, target: bool) -> Result<Array2<f64>> {
        let input = critic_input(states, actions);
        let nets = if target { &self.critic_targets } else { &self.critics };
        let mut out = Array2::zeros((nets.len(), states.nrows()));
        for (i, c) in nets.iter().enumerate() {
            out.row_mut(i).assign(&c.predict(input.view())?.column(0));
        }
        Ok(out)
    }

    /// Draws the target-critic pair and smoothing noise, then computes `y`.
    pub fn critic_target(&self, batch: &Batch, rng: &mut Rng) -> Result<Array1<f64>> {
        let m = self.ensemble_size();
        let pair = index::sample(rng, m, 2);
        let (i, j) = (pair.index(0), pair.index(1));
        let n = batch.len();
        let noise = if self.config.smooth_std > 0.0 {
            let d = Normal::new(0.0, self.config.smooth_std).expect("std > 0");
            let c = self.config.smooth_clip;
            Array2::from_shape_simple_fn((n, self.spec.action_dim), || d.sample(rng).clamp(-c, c))
        } else {
            Array2::zeros((n, self.spec.action_dim))
        };
        self.critic_target_with(batch, (i, j), &noise)
    }

    /// Target values for a fixed critic pair and smoothing noise.
    pub fn critic_target_with(&self, batch: &Batch, pair: (usize, usize), noise: &Array2<f64>) -> Result<Array1<f64>> {
        let mut next_actions = self.actor_target.predict(batch.next_states.view())?;
        next_actions += noise;
        next_actions.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        let input = critic_input(batch.next_states.view(), next_actions.view());
        let qi = self.critic_targets[pair.0].predict(input.view())?;
        let qj = self.critic_targets[pair.1].predict(input.view())?;
        let gamma = self.config.gamma;
        Ok(ndarray::Zip::from(&batch.rewards)
            .and(qi.column(0))
            .and(qj.column(0))
            .map_collect(|&r, &a, &b| r + gamma * a.min(b)))
    }

    /// Mean squared error of one critic against fixed targets, and its gradient.
    pub fn critic_loss_and_grad(&self, critic: usize, input: ArrayView2<f64>, targets: &Array1<f64>) -> Result<(f64, ParamGrads)> {
        let net = &self.critics[critic];
        let cache = net.forward_batch(input)?;
        let n = targets.len() as f64;
        let diff = &cache.output().column(0) - targets;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let grad = (diff * (2.0 / n)).insert_axis(Axis(1));
        let (g, _) = net.backward_batch(&cache, grad.view())?;
        Ok((loss, g))
    }

    /// One Adam step for every critic toward a shared target over the
    /// concatenated replay and demo batches. Returns the mean loss.
    pub fn update_critics(&mut self, replay: &Batch, demo: Option<&Batch>, rng: &mut Rng) -> Result<f64> {
        if replay.is_empty() {
            return Err(Error::InvalidArgument("empty replay batch".into()));
        }
        self.check_demo_usage(demo)?;
        let joined;
        let batch = match demo {
            Some(d) if !d.is_empty() => {
                joined = replay.concat(d);
                &joined
            }
            _ => replay,
        };
        let y = self.critic_target(batch, rng)?;
        let input = critic_input(batch.states.view(), batch.actions.view());
        let mut total = 0.0;
        for i in 0..self.ensemble_size() {
            let (loss, g) = self.critic_loss_and_grad(i, input.view(), &y)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("critic {i} loss is not finite")));
            }
            nn::adam_step(&mut self.critics[i], &g, &mut self.critic_opts[i], self.config.lr)?;
            total += loss;
        }
        Ok(total / self.ensemble_size() as f64)
    }

    fn check_demo_usage(&self, demo: Option<&Batch>) -> Result<()> {
        if !self.config.use_demos && demo.is_some_and(|d| !d.is_empty()) {
            return Err(Error::InvalidArgument("demo batch given while use_demos = false".into()));
        }
        Ok(())
    }

    /// Ensemble samples `Q_i(s_d, a_d)` and `Q_i(s_d, π(s_d))`, each `(m, n)`.
    pub fn demo_q_samples(&self, demo: &Batch) -> Result<(Array2<f64>, Array2<f64>)> {
        let pi = self.actor.predict(demo.states.view())?;
        let qd = self.ensemble_q(demo.states.view(), demo.actions.view(), false)?;
        let qpi = self.ensemble_q(demo.states.view(), pi.view(), false)?;
        Ok((qd, qpi))
    }

    /// Demo weights of the configured rule from the current networks.
    pub fn demo_weights(&self, demo: &Batch, rng: &mut Rng) -> Result<Vec<f64>> {
        self.demo_weights_with(demo, &self.config.weighting, rng)
    }

    pub fn demo_weights_with(&self, demo: &Batch, weighting: &WeightConfig, rng: &mut Rng) -> Result<Vec<f64>> {
        let (qd, qpi) = self.demo_q_samples(demo)?;
        (0..demo.len())
            .map(|k| {
                let d = qd.column(k).to_vec();
                let p = qpi.column(k).to_vec();
                weighting.weight(&d, &p, rng)
            })
            .collect()
    }

    /// Actor loss and gradient with the demo weights held fixed.
    pub fn actor_loss_and_grad(&self, replay: &Batch, demo: Option<&Batch>, weights: &[f64]) -> Result<(f64, ParamGrads)> {
        let n_r = replay.len();
        let demo = demo.filter(|d| !d.is_empty());
        let n_d = demo.map_or(0, Batch::len);
        if weights.len() != n_d {
            return Err(Error::DimMismatch {
                what: "demo weights",
                expected: n_d,
                got: weights.len(),
            });
        }
        let states = match demo {
            Some(d) => ndarray::concatenate![Axis(0), replay.states, d.states],
            None => replay.states.clone(),
        };
        let cache = self.actor.forward_batch(states.view())?;
        let pi = cache.output();
        let mut dpi = Array2::zeros(pi.dim());
        let m = self.ensemble_size() as f64;
        let in_dim = self.spec.input_dim();

        let mut loss = 0.0;
        if n_r > 0 {
            let pi_r = pi.slice(s![..n_r, ..]);
            let input = critic_input(replay.states.view(), pi_r);
            let coef = -self.config.q_weight / (n_r as f64 * m);
            let out_grad = Array2::from_elem((n_r, 1), coef);
            let mut q_sum = 0.0;
            for c in &self.critics {
                let cc = c.forward_batch(input.view())?;
                q_sum += cc.output().sum();
                let dx = c.input_grad_batch(&cc, out_grad.view())?;
                let mut slot = dpi.slice_mut(s![..n_r, ..]);
                slot += &dx.slice(s![.., in_dim..]);
            }
            loss -= self.config.q_weight * q_sum / (n_r as f64 * m);
        }
        if let Some(d) = demo {
            let lam = self.config.bc_weight;
            for k in 0..n_d {
                let mut sq = 0.0;
                for a in 0..self.spec.action_dim {
                    let diff = pi[[n_r + k, a]] - d.actions[[k, a]];
                    sq += diff * diff;
                    dpi[[n_r + k, a]] = 2.0 * lam * weights[k] * diff;
                }
                loss += lam * weights[k] * sq;
            }
        }
        let (g, _) = self.actor.backward_batch(&cache, dpi.view())?;
        Ok((loss, g))
    }

    pub fn actor_update(&mut self, replay: &Batch, demo: Option<&Batch>, rng: &mut Rng) -> Result<ActorUpdate> {
        if replay.is_empty() {
            return Err(Error::InvalidArgument("empty replay batch".into()));
        }
        self.check_demo_usage(demo)?;
        let weights = match demo {
            Some(d) if !d.is_empty() => self.demo_weights(d, rng)?,
            _ => Vec::new(),
        };
        let (loss, g) = self.actor_loss_and_grad(replay, demo, &weights)?;
        if !loss.is_finite() {
            return Err(Error::Numerical("actor loss is not finite".into()));
        }
        nn::adam_step(&mut self.actor, &g, &mut self.actor_opt, self.config.lr)?;
        Ok(ActorUpdate { loss, weights })
    }

    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.config.tau;
        nn::polyak_update(&mut self.actor_target, &self.actor, tau)?;
        for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
            nn::polyak_update(t, c, tau)?;
        }
        Ok(())
    }

    fn sample_batches(&self, replay: &ReplayBuffer, demos: Option<&ReplayBuffer>, rng: &mut Rng) -> Result<(Batch, Option<Batch>)> {
        let r = self.batch(replay.sample(self.config.replay_batch, rng)?)?;
        let d = match demos {
            Some(buf) if self.config.use_demos => Some(self.batch(buf.sample(self.config.demo_batch, rng)?)?),
            _ => None,
        };
        Ok((r, d))
    }

    /// Critic updates, one actor update, then Polyak averaging of all targets.
    pub fn train_iteration(&mut self, replay: &ReplayBuffer, demos: Option<&ReplayBuffer>, rngs: &mut TrainRngs) -> Result<IterationMetrics> {
        let mut metrics = IterationMetrics::default();
        for _ in 0..self.config.critic_updates_per_iter {
            let (r, d) = self.sample_batches(replay, demos, &mut rngs.batch)?;
            metrics.critic_losses.push(self.update_critics(&r, d.as_ref(), &mut rngs.target)?);
        }
        let (r, d) = self.sample_batches(replay, demos, &mut rngs.batch)?;
        let upd = self.actor_update(&r, d.as_ref(), &mut rngs.weights)?;
        metrics.actor_loss = upd.loss;
        metrics.mean_weight = upd.mean_weight();
        self.update_targets()?;
        Ok(metrics)
    }

    /// Greedy rollouts; success means reward 0 on the final step.
    pub fn evaluate(&self, n_episodes: usize, seed: u64) -> Result<f64> {
        if n_episodes == 0 {
            return Err(Error::InvalidArgument("n_episodes must be at least 1".into()));
        }
        let mut env_rng = rng::stream(seed, Stream::Eval);
        let mut unused = rng::from_seed(0);
        let mut successes = 0;
        for e in 0..n_episodes {
            let ep = env::rollout(&self.spec, &mut env_rng, e as u64, |obs| self.select_action(obs, false, &mut unused))?;
            if env::episode_success(&ep) {
                successes += 1;
            }
        }
        Ok(successes as f64 / n_episodes as f64)
    }

    /// Uniform random action in `[-1, 1]^d`.
    pub fn random_action(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.spec.action_dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

/// Success rate of an arbitrary policy under the same protocol as
/// [`Agent::evaluate`].
pub fn evaluate_policy(spec: &EnvSpec, n_episodes: usize, seed: u64, mut policy: impl FnMut(&GoalObs) -> Result<Vec<f64>>) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be at least 1".into()));
    }
    let mut env_rng = rng::stream(seed, Stream::Eval);
    let mut successes = 0;
    for e in 0..n_episodes {
        let ep = env::rollout(spec, &mut env_rng, e as u64, &mut policy)?;
        if env::episode_success(&ep) {
            successes += 1;
        }
    }
    Ok(successes as f64 / n_episodes as f64)
}

/// Everything needed to resume or evaluate an agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub config: AgentConfig,
    pub env_spec: EnvSpec,
    pub actor: NetworkDoc,
    pub actor_target: ParamSet,
    pub critics: Vec<NetworkDoc>,
    pub critic_targets: Vec<ParamSet>,
    pub normalizer: Normalizer,
    pub total_env_steps: u64,
    pub eval_seed: u64,
}

impl AgentCheckpoint {
    pub fn new(agent: &Agent, total_env_steps: u64, eval_seed: u64) -> Self {
        Self {
            config: agent.config.clone(),
            env_spec: agent.spec.clone(),
            actor: NetworkDoc::new(&agent.actor, &agent.actor_opt),
            actor_target: agent.actor_target.clone(),
            critics: agent
                .critics
                .iter()
                .zip(&agent.critic_opts)
                .map(|(c, o)| NetworkDoc::new(c, o))
                .collect(),
            critic_targets: agent.critic_targets.clone(),
            normalizer: agent.normalizer.clone(),
            total_env_steps,
            eval_seed,
        }
    }

    pub fn into_agent(self) -> Result<Agent> {
        self.config.validate()?;
        self.env_spec.validate()?;
        if self.critics.len() != self.config.ensemble_size || self.critic_targets.len() != self.critics.len() {
            return Err(Error::Shape("checkpoint critic count does not match ensemble_size".into()));
        }
        let (actor, actor_opt) = self.actor.into_parts()?;
        let mut critics = Vec::new();
        let mut critic_opts = Vec::new();
        for doc in self.critics {
            let (c, o) = doc.into_parts()?;
            critics.push(c);
            critic_opts.push(o);
        }
        let input = self.env_spec.input_dim();
        if actor.input_dim() != input
            || actor.output_dim() != self.env_spec.action_dim
            || critics.iter().any(|c| c.input_dim() != input + self.env_spec.action_dim || c.output_dim() != 1)
            || self.normalizer.dim() != input
        {
            return Err(Error::Shape("checkpoint networks do not match the environment".into()));
        }
        Ok(Agent {
            config: self.config,
            spec: self.env_spec,
            actor,
            actor_target: self.actor_target,
            actor_opt,
            critics,
            critic_targets: self.critic_targets,
            critic_opts,
            normalizer: self.normalizer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_demos, DemoQuality};
    use crate::weighting::WeightMode;

    fn small_config() -> AgentConfig {
        AgentConfig {
            replay_batch: 16,
            demo_batch: 4,
            ensemble_size: 3,
            hidden_width: 8,
            warmup_steps: 0,
            ..AgentConfig::default()
        }
    }

    fn setup(config: AgentConfig) -> (Agent, ReplayBuffer, ReplayBuffer) {
        let spec = EnvSpec::point_reach_2d();
        let mut agent = Agent::new(&spec, config, 1).unwrap();
        let demos = generate_demos(&spec, DemoQuality::Suboptimal, 2, 3).unwrap();
        agent.normalizer.init_from_demos(&demos).unwrap();
        let mut replay = ReplayBuffer::new(10_000).unwrap();
        for ep in &demos.episodes {
            replay.store_episode_with_her(ep, spec.success_eps).unwrap();
        }
        let demo_buf = ReplayBuffer::from_transitions(demos.transitions().cloned().collect()).unwrap();
        (agent, replay, demo_buf)
    }

    /// Sets a critic to output the constant `c`.
    fn constant_critic(net: &mut ParamSet, c: f64) {
        let n = net.num_params();
        net.set_flat(&vec![0.0; n]).unwrap();
        let last = net.layers_mut().last_mut().unwrap();
        last.bias[0] = c;
    }

    #[test]
    fn targets_start_as_copies() {
        let (agent, _, _) = setup(small_config());
        assert_eq!(agent.actor, agent.actor_target);
        assert_eq!(agent.critics, agent.critic_targets);
        assert_ne!(agent.critics[0], agent.critics[1]);
    }

    #[test]
    fn select_action_contract() {
        let (mut agent, _, _) = setup(small_config());
        let obs = GoalObs {
            obs: vec![0.2, 0.3, 0.0, 0.0],
            achieved_goal: vec![0.2, 0.3],
            desired_goal: vec![0.8, 0.1],
        };
        let mut rng = rng::from_seed(0);
        let a = agent.select_action(&obs, false, &mut rng).unwrap();
        let b = agent.select_action(&obs, false, &mut rng).unwrap();
        assert_eq!(a, b);
        for _ in 0..200 {
            let a = agent.select_action(&obs, true, &mut rng).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let last = agent.actor.layers_mut().last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        assert_eq!(agent.select_action(&obs, false, &mut rng).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn target_uses_min_of_pair() {
        let (mut agent, replay, _) = setup(AgentConfig {
            ensemble_size: 2,
            ..small_config()
        });
        constant_critic(&mut agent.critic_targets[0], 2.0);
        constant_critic(&mut agent.critic_targets[1], 3.0);
        let mut t = replay.get(0).unwrap().clone();
        t.reward = 0.0;
        let batch = agent.batch([&t]).unwrap();
        let y = agent.critic_target(&batch, &mut rng::from_seed(4)).unwrap();
        assert!((y[0] - 1.96).abs() < 1e-12);

        agent.config.gamma = 0.0;
        t.reward = -1.0;
        let batch = agent.batch([&t]).unwrap();
        assert_eq!(agent.critic_target(&batch, &mut rng::from_seed(4)).unwrap()[0], -1.0);
    }

    #[test]
    fn identical_critics_make_pair_choice_irrelevant() {
        let (mut agent, replay, _) = setup(small_config());
        let c = agent.critic_targets[0].clone();
        agent.critic_targets.iter_mut().for_each(|t| *t = c.clone());
        let batch = agent.batch(replay.iter().take(8)).unwrap();
        let noise = Array2::zeros((8, 2));
        let a = agent.critic_target_with(&batch, (0, 1), &noise).unwrap();
        let b = agent.critic_target_with(&batch, (2, 1), &noise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn critic_loss_is_squared_error() {
        let (agent, replay, _) = setup(small_config());
        let batch = agent.batch(replay.iter().take(1)).unwrap();
        let input = critic_input(batch.states.view(), batch.actions.view());
        let q = agent.critics[0].predict(input.view()).unwrap()[[0, 0]];
        let y = Array1::from(vec![q + 0.7]);
        let (loss, _) = agent.critic_loss_and_grad(0, input.view(), &y).unwrap();
        assert!((loss - 0.49).abs() < 1e-12);
        let (loss, g) = agent.critic_loss_and_grad(0, input.view(), &Array1::from(vec![q])).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn demo_batch_rejected_without_demo_mode() {
        let (mut agent, replay, demos) = setup(AgentConfig {
            use_demos: false,
            ..small_config()
        });
        let r = agent.batch(replay.iter().take(4)).unwrap();
        let d = agent.batch(demos.iter().take(2)).unwrap();
        let mut rng = rng::from_seed(0);
        assert!(agent.actor_update(&r, Some(&d), &mut rng).is_err());
        assert!(agent.update_critics(&r, Some(&d), &mut rng).is_err());
        let empty = agent.batch(std::iter::empty()).unwrap();
        assert!(agent.update_critics(&empty, None, &mut rng).is_err());
    }

    #[test]
    fn zero_weights_reduce_to_policy_gradient() {
        let (agent, replay, demos) = setup(small_config());
        let r = agent.batch(replay.iter().take(6)).unwrap();
        let d = agent.batch(demos.iter().take(3)).unwrap();
        let (l0, g0) = agent.actor_loss_and_grad(&r, Some(&d), &[0.0; 3]).unwrap();
        let (l1, g1) = agent.actor_loss_and_grad(&r, None, &[]).unwrap();
        assert!((l0 - l1).abs() < 1e-15);
        for (a, b) in g0.flatten().iter().zip(g1.flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pure_cloning_moves_toward_demo_actions() {
        let (mut agent, replay, demos) = setup(AgentConfig {
            q_weight: 0.0,
            weighting: WeightConfig {
                mode: WeightMode::QfilterEnsembleMean,
                alpha: 10.0,
            },
            ..small_config()
        });
        let r = agent.batch(replay.iter().take(4)).unwrap();
        let d = agent.batch(demos.iter().take(4)).unwrap();
        let ones = [1.0; 4];
        let (before, _) = agent.actor_loss_and_grad(&r, Some(&d), &ones).unwrap();
        for _ in 0..50 {
            let (_, g) = agent.actor_loss_and_grad(&r, Some(&d), &ones).unwrap();
            nn::adam_step(&mut agent.actor, &g, &mut agent.actor_opt, 1e-3).unwrap();
        }
        let (after, _) = agent.actor_loss_and_grad(&r, Some(&d), &ones).unwrap();
        assert!(after < before);
    }

    #[test]
    fn iteration_shape_and_determinism() {
        let (agent, replay, demos) = setup(small_config());
        let mut a = agent.clone();
        let mut b = agent.clone();
        let mut ra = TrainRngs::from_master(9);
        let mut rb = TrainRngs::from_master(9);
        let m = a.train_iteration(&replay, Some(&demos), &mut ra).unwrap();
        b.train_iteration(&replay, Some(&demos), &mut rb).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.critic_losses.len(), 2);
        assert!(m.mean_weight.is_some());
        assert_ne!(a.actor, agent.actor);
    }

    #[test]
    fn frozen_targets_with_zero_tau() {
        let (agent, replay, demos) = setup(AgentConfig {
            tau: 0.0,
            ..small_config()
        });
        let mut a = agent.clone();
        let mut rngs = TrainRngs::from_master(2);
        for _ in 0..3 {
            a.train_iteration(&replay, Some(&demos), &mut rngs).unwrap();
        }
        assert_eq!(a.actor_target, agent.actor_target);
        assert_eq!(a.critic_targets, agent.critic_targets);
    }

    #[test]
    fn evaluate_rejects_zero_episodes_and_is_repeatable() {
        let (agent, _, _) = setup(small_config());
        assert!(agent.evaluate(0, 1).is_err());
        assert_eq!(agent.evaluate(5, 3).unwrap(), agent.evaluate(5, 3).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (agent, _, _) = setup(small_config());
        let text = serde_json::to_string(&AgentCheckpoint::new(&agent, 42, 7)).unwrap();
        let ck: AgentCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(ck.total_env_steps, 42);
        assert_eq!(ck.into_agent().unwrap(), agent);
    }
}
