//! Goal-conditioned point-mass tasks with sparse binary reward.
//!
//! Both tasks live in the unit square. The agent is a point mass driven by a
//! 2-D acceleration command in `[-1, 1]²`:
//!
//! ```text
//! v' = clip(v + amax · a · dt, ±vmax)     (per component)
//! x' = x + v' · dt
//! ```
//!
//! A component of `x'` that leaves `[0, 1]` is clamped to the wall and the
//! matching velocity component is zeroed.
//!
//! - `point-reach-2d`: obs = `[x, y, vx, vy]`, achieved goal = agent position.
//! - `point-push-2d`: obs = `[x, y, vx, vy, px, py, pvx, pvy]`, achieved goal =
//!   puck position. Contact rule: the puck first coasts (velocity damped by
//!   [`PUCK_FRICTION`] per step), then the agent moves; if the agent disk and
//!   puck disk overlap afterwards, the puck is displaced along the center line
//!   to exact contact distance and takes the agent's velocity component along
//!   that line (if positive).
//!
//! Episodes have a fixed horizon `T`; `done` is set only on step `T - 1`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const AGENT_RADIUS: f64 = 0.05;
pub const PUCK_RADIUS: f64 = 0.05;
pub const PUCK_FRICTION: f64 = 0.8;

/// Agent start and reach-goal sampling box (per coordinate).
pub const START_BOX: (f64, f64) = (0.1, 0.9);
pub const REACH_GOAL_BOX: (f64, f64) = (0.1, 0.9);
pub const PUCK_START_BOX: (f64, f64) = (0.3, 0.7);
pub const PUSH_GOAL_BOX: (f64, f64) = (0.2, 0.8);

/// PD gains of the scripted demonstrator on point-reach-2d.
pub const REACH_EXPERT_GAINS: (f64, f64) = (5.0, 3.0);
/// PD gains of the scripted demonstrator on point-push-2d.
pub const PUSH_EXPERT_GAINS: (f64, f64) = (8.0, 3.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvName {
    #[serde(rename = "point-reach-2d")]
    PointReach2d,
    #[serde(rename = "point-push-2d")]
    PointPush2d,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::PointReach2d => "point-reach-2d",
            EnvName::PointPush2d => "point-push-2d",
        }
    }
}

impl std::str::FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-reach-2d" => Ok(EnvName::PointReach2d),
            "point-push-2d" => Ok(EnvName::PointPush2d),
            other => Err(Error::InvalidArgument(format!("unknown environment '{other}'"))),
        }
    }
}

impl std::fmt::Display for EnvName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvName,
    pub horizon: usize,
    pub dt: f64,
    pub success_eps: f64,
    pub action_dim: usize,
    pub obs_dim: usize,
    pub goal_dim: usize,
    pub vmax: f64,
    pub amax: f64,
}

impl EnvSpec {
    pub fn point_reach_2d() -> Self {
        Self {
            name: EnvName::PointReach2d,
            horizon: 50,
            dt: 0.1,
            success_eps: 0.05,
            action_dim: 2,
            obs_dim: 4,
            goal_dim: 2,
            vmax: 1.0,
            amax: 2.0,
        }
    }

    pub fn point_push_2d() -> Self {
        Self {
            name: EnvName::PointPush2d,
            horizon: 60,
            dt: 0.1,
            success_eps: 0.05,
            action_dim: 2,
            obs_dim: 8,
            goal_dim: 2,
            vmax: 1.0,
            amax: 2.0,
        }
    }

    pub fn from_name(name: EnvName) -> Self {
        match name {
            EnvName::PointReach2d => Self::point_reach_2d(),
            EnvName::PointPush2d => Self::point_push_2d(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon >= 1
            && self.success_eps > 0.0
            && self.dt > 0.0
            && self.action_dim >= 1
            && self.obs_dim >= 1
            && self.goal_dim >= 1
            && self.vmax > 0.0
            && self.amax > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid environment spec {self:?}")))
        }
    }

    /// Width of the concatenated observation ⊕ goal network input.
    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.goal_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalObs {
    pub obs: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

impl GoalObs {
    /// `obs ⊕ desired_goal`.
    pub fn obs_goal(&self) -> Vec<f64> {
        let mut v = self.obs.clone();
        v.extend_from_slice(&self.desired_goal);
        v
    }
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub puck_pos: [f64; 2],
    pub puck_vel: [f64; 2],
    pub goal: [f64; 2],
    /// Steps already taken in this episode.
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Achieved goal of `next_obs`.
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
    pub done: bool,
    pub episode_id: u64,
    pub t: usize,
}

pub type Episode = Vec<Transition>;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub obs: GoalObs,
    pub reward: f64,
    pub done: bool,
}

/// Achieved goal as a function of the observation vector.
pub fn achieved_goal(spec: &EnvSpec, obs: &[f64]) -> Vec<f64> {
    match spec.name {
        EnvName::PointReach2d => obs[0..2].to_vec(),
        EnvName::PointPush2d => obs[4..6].to_vec(),
    }
}

fn observe(spec: &EnvSpec, s: &EnvState) -> GoalObs {
    let obs = match spec.name {
        EnvName::PointReach2d => vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1]],
        EnvName::PointPush2d => vec![
            s.pos[0],
            s.pos[1],
            s.vel[0],
            s.vel[1],
            s.puck_pos[0],
            s.puck_pos[1],
            s.puck_vel[0],
            s.puck_vel[1],
        ],
    };
    let achieved_goal = achieved_goal(spec, &obs);
    GoalObs {
        obs,
        achieved_goal,
        desired_goal: s.goal.to_vec(),
    }
}

fn sample_box(rng: &mut Rng, (lo, hi): (f64, f64)) -> [f64; 2] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Samples a fresh episode: positions and goal uniform in their boxes,
/// velocities zero.
pub fn reset(spec: &EnvSpec, rng: &mut Rng) -> (EnvState, GoalObs) {
    let state = match spec.name {
        EnvName::PointReach2d => {
            let pos = sample_box(rng, START_BOX);
            let goal = sample_box(rng, REACH_GOAL_BOX);
            EnvState {
                pos,
                vel: [0.0; 2],
                puck_pos: [0.0; 2],
                puck_vel: [0.0; 2],
                goal,
                t: 0,
            }
        }
        EnvName::PointPush2d => {
            let puck_pos = sample_box(rng, PUCK_START_BOX);
            let goal = sample_box(rng, PUSH_GOAL_BOX);
            let mut pos = sample_box(rng, START_BOX);
            while dist2(pos, puck_pos) < AGENT_RADIUS + PUCK_RADIUS + 0.05 {
                pos = sample_box(rng, START_BOX);
            }
            EnvState {
                pos,
                vel: [0.0; 2],
                puck_pos,
                puck_vel: [0.0; 2],
                goal,
                t: 0,
            }
        }
    };
    let obs = observe(spec, &state);
    (state, obs)
}

fn integrate_wall(pos: &mut [f64; 2], vel: &mut [f64; 2], dt: f64) {
    for k in 0..2 {
        pos[k] += vel[k] * dt;
        if pos[k] < 0.0 {
            pos[k] = 0.0;
            vel[k] = 0.0;
        } else if pos[k] > 1.0 {
            pos[k] = 1.0;
            vel[k] = 0.0;
        }
    }
}

/// Advances one step. Action components are clipped to `[-1, 1]`.
pub fn step(spec: &EnvSpec, state: &EnvState, action: &[f64]) -> Result<StepOutcome> {
    if action.len() != spec.action_dim {
        return Err(Error::DimMismatch {
            what: "action",
            expected: spec.action_dim,
            got: action.len(),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("non-finite action".into()));
    }
    let mut s = state.clone();
    if spec.name == EnvName::PointPush2d {
        for k in 0..2 {
            s.puck_vel[k] *= PUCK_FRICTION;
        }
        integrate_wall(&mut s.puck_pos, &mut s.puck_vel, spec.dt);
    }
    for k in 0..2 {
        let a = action[k].clamp(-1.0, 1.0);
        s.vel[k] = (s.vel[k] + spec.amax * a * spec.dt).clamp(-spec.vmax, spec.vmax);
    }
    integrate_wall(&mut s.pos, &mut s.vel, spec.dt);
    if spec.name == EnvName::PointPush2d {
        resolve_contact(&mut s);
    }
    s.t += 1;
    let obs = observe(spec, &s);
    let reward = compute_reward(&obs.achieved_goal, &obs.desired_goal, spec.success_eps)?;
    let done = s.t >= spec.horizon;
    Ok(StepOutcome {
        state: s,
        obs,
        reward,
        done,
    })
}

fn resolve_contact(s: &mut EnvState) {
    let contact = AGENT_RADIUS + PUCK_RADIUS;
    let d = [s.puck_pos[0] - s.pos[0], s.puck_pos[1] - s.pos[1]];
    let dist = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if dist >= contact {
        return;
    }
    let n = if dist > 1e-12 { [d[0] / dist, d[1] / dist] } else { [1.0, 0.0] };
    for k in 0..2 {
        s.puck_pos[k] = (s.pos[k] + n[k] * contact).clamp(0.0, 1.0);
    }
    let along = (s.vel[0] * n[0] + s.vel[1] * n[1]).max(0.0);
    s.puck_vel = [along * n[0], along * n[1]];
}

/// Sparse reward: `0` if `‖achieved − desired‖ < eps`, else `−1`.
pub fn compute_reward(achieved: &[f64], desired: &[f64], success_eps: f64) -> Result<f64> {
    if achieved.len() != desired.len() {
        return Err(Error::DimMismatch {
            what: "goal",
            expected: desired.len(),
            got: achieved.len(),
        });
    }
    let d2: f64 = achieved.iter().zip(desired).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(if d2.sqrt() < success_eps { 0.0 } else { -1.0 })
}

fn pd_toward(target: [f64; 2], pos: [f64; 2], vel: [f64; 2], (kp, kd): (f64, f64)) -> [f64; 2] {
    [
        kp * (target[0] - pos[0]) - kd * vel[0],
        kp * (target[1] - pos[1]) - kd * vel[1],
    ]
}

/// Scripted PD demonstrator plus Gaussian action noise, clipped to `[-1, 1]`.
///
/// Reach: drive the agent to the goal. Push: move to a staging point behind
/// the puck (on the goal-puck line), then drive through the puck toward the
/// goal.
pub fn scripted_expert(spec: &EnvSpec, obs: &GoalObs, noise_std: f64, rng: &mut Rng) -> Vec<f64> {
    let pos = [obs.obs[0], obs.obs[1]];
    let vel = [obs.obs[2], obs.obs[3]];
    let goal = [obs.desired_goal[0], obs.desired_goal[1]];
    let cmd = match spec.name {
        EnvName::PointReach2d => pd_toward(goal, pos, vel, REACH_EXPERT_GAINS),
        EnvName::PointPush2d => {
            let puck = [obs.obs[4], obs.obs[5]];
            let to_goal = [goal[0] - puck[0], goal[1] - puck[1]];
            let gd = (to_goal[0].powi(2) + to_goal[1].powi(2)).sqrt();
            if gd < 0.5 * spec.success_eps {
                // Puck placed: back off to stay out of contact.
                let away = [pos[0] - puck[0], pos[1] - puck[1]];
                let ad = (away[0].powi(2) + away[1].powi(2)).sqrt().max(1e-9);
                let hold = [
                    puck[0] + away[0] / ad * (AGENT_RADIUS + PUCK_RADIUS + 0.05),
                    puck[1] + away[1] / ad * (AGENT_RADIUS + PUCK_RADIUS + 0.05),
                ];
                pd_toward(hold, pos, vel, PUSH_EXPERT_GAINS)
            } else {
                let u = [to_goal[0] / gd, to_goal[1] / gd];
                let contact = AGENT_RADIUS + PUCK_RADIUS;
                let stage = [puck[0] - u[0] * (contact + 0.02), puck[1] - u[1] * (contact + 0.02)];
                let rel = [pos[0] - puck[0], pos[1] - puck[1]];
                let along = rel[0] * u[0] + rel[1] * u[1];
                let lateral = (rel[0] * -u[1] + rel[1] * u[0]).abs();
                if along < -0.5 * contact && lateral < 0.3 * contact {
                    // Aligned behind the puck: push so the puck stops at the goal.
                    let target = [goal[0] - u[0] * contact, goal[1] - u[1] * contact];
                    pd_toward(target, pos, vel, PUSH_EXPERT_GAINS)
                } else if along > -0.5 * contact && dist2(pos, puck) < contact + 0.04 {
                    // On the wrong side: step sideways around the puck.
                    let side = [-u[1], u[0]];
                    let sgn = if rel[0] * side[0] + rel[1] * side[1] >= 0.0 { 1.0 } else { -1.0 };
                    let target = [
                        puck[0] + sgn * side[0] * (contact + 0.06) - u[0] * 0.03,
                        puck[1] + sgn * side[1] * (contact + 0.06) - u[1] * 0.03,
                    ];
                    pd_toward(target, pos, vel, PUSH_EXPERT_GAINS)
                } else {
                    pd_toward(stage, pos, vel, PUSH_EXPERT_GAINS)
                }
            }
        }
    };
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).expect("noise_std > 0"))
    } else {
        None
    };
    (0..spec.action_dim)
        .map(|k| {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
            (cmd[k] + n).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Rolls out one episode under `policy`, labelling transitions with `episode_id`.
pub fn rollout(
    spec: &EnvSpec,
    env_rng: &mut Rng,
    episode_id: u64,
    mut policy: impl FnMut(&GoalObs) -> Result<Vec<f64>>,
) -> Result<Episode> {
    let (mut state, mut obs) = reset(spec, env_rng);
    let mut episode = Vec::with_capacity(spec.horizon);
    for t in 0..spec.horizon {
        let action = policy(&obs)?;
        let out = step(spec, &state, &action)?;
        let clipped: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        episode.push(Transition {
            obs: obs.obs.clone(),
            action: clipped,
            reward: out.reward,
            next_obs: out.obs.obs.clone(),
            achieved_goal: out.obs.achieved_goal.clone(),
            desired_goal: obs.desired_goal.clone(),
            done: out.done,
            episode_id,
            t,
        });
        state = out.state;
        obs = out.obs;
    }
    Ok(episode)
}

/// An episode counts as a success when its final reward is 0.
pub fn episode_success(episode: &[Transition]) -> bool {
    episode.last().is_some_and(|t| t.reward == 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DemoQuality {
    #[serde(rename = "expert")]
    Expert,
    #[serde(rename = "suboptimal")]
    Suboptimal,
    #[serde(rename = "severe")]
    Severe,
    /// 1% noise-free expert episodes, 99% uniform-random-action episodes.
    #[serde(rename = "mixed-1pct")]
    Mixed1Pct,
}

impl DemoQuality {
    /// Action-noise standard deviation of the tier.
    pub fn noise_std(self) -> f64 {
        match self {
            DemoQuality::Expert | DemoQuality::Mixed1Pct => 0.0,
            DemoQuality::Suboptimal => 0.6,
            DemoQuality::Severe => 1.0,
        }
    }
}

impl std::str::FromStr for DemoQuality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(DemoQuality::Expert),
            "suboptimal" => Ok(DemoQuality::Suboptimal),
            "severe" => Ok(DemoQuality::Severe),
            "mixed-1pct" => Ok(DemoQuality::Mixed1Pct),
            other => Err(Error::InvalidArgument(format!("unknown demo quality '{other}'"))),
        }
    }
}

/// First line of a demo file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub env_spec: EnvSpec,
    pub quality: DemoQuality,
    pub episodes: usize,
    pub seed: u64,
    pub success_rate: f64,
    /// Episodes rolled out by the noise-free expert.
    pub expert_episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub header: DemoHeader,
    pub episodes: Vec<Episode>,
}

impl DemoSet {
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flatten()
    }

    pub fn num_transitions(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    /// JSON Lines: header, then one transition per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for t in self.transitions() {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty demo file".into()))?
            .map_err(|e| Error::io("<demo stream>", e))?;
        let header: DemoHeader = serde_json::from_str(&header_line).map_err(|e| Error::json("demo header", e))?;
        let mut episodes: Vec<Episode> = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<demo stream>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition =
                serde_json::from_str(&line).map_err(|e| Error::json(format!("demo line {}", n + 2), e))?;
            let spec = &header.env_spec;
            if t.obs.len() != spec.obs_dim
                || t.next_obs.len() != spec.obs_dim
                || t.action.len() != spec.action_dim
                || t.desired_goal.len() != spec.goal_dim
                || t.achieved_goal.len() != spec.goal_dim
            {
                return Err(Error::Shape(format!("demo line {} does not match the header's env spec", n + 2)));
            }
            match episodes.last_mut() {
                Some(ep) if ep.last().is_some_and(|last| last.episode_id == t.episode_id) => ep.push(t),
                _ => episodes.push(vec![t]),
            }
        }
        Ok(Self { header, episodes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

/// Generates `n_episodes` demonstration episodes of the given quality.
pub fn generate_demos(spec: &EnvSpec, quality: DemoQuality, n_episodes: usize, seed: u64) -> Result<DemoSet> {
    spec.validate()?;
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be at least 1".into()));
    }
    let mut env_rng = rng::stream(seed, rng::Stream::Env);
    let mut act_rng = rng::stream(seed, rng::Stream::DemoGeneration);
    // mixed-1pct: one expert episode per hundred (at least one), at evenly
    // spaced positions starting with episode 0.
    let n_expert = match quality {
        DemoQuality::Mixed1Pct => n_episodes.div_ceil(100),
        _ => n_episodes,
    };
    let stride = n_episodes / n_expert;
    let mut episodes = Vec::with_capacity(n_episodes);
    for e in 0..n_episodes {
        let scripted = quality != DemoQuality::Mixed1Pct || (e % stride == 0 && e / stride < n_expert);
        let noise = quality.noise_std();
        let ep = rollout(spec, &mut env_rng, e as u64, |obs| {
            Ok(if scripted {
                scripted_expert(spec, obs, noise, &mut act_rng)
            } else {
                (0..spec.action_dim).map(|_| act_rng.random_range(-1.0..1.0)).collect()
            })
        })?;
        episodes.push(ep);
    }
    let successes = episodes.iter().filter(|e| episode_success(e)).count();
    Ok(DemoSet {
        header: DemoHeader {
            env_spec: spec.clone(),
            quality,
            episodes: n_episodes,
            seed,
            success_rate: successes as f64 / n_episodes as f64,
            expert_episodes: n_expert,
        },
        episodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RewardNoise {
    /// Each `-1` reward becomes `0` with probability `p`.
    Flip { p: f64 },
    /// Additive `N(0, std)` on `-1` rewards.
    Gaussian { std: f64 },
}

impl RewardNoise {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardNoise::Flip { p } if (0.0..=1.0).contains(&p) => Ok(()),
            RewardNoise::Gaussian { std } if std >= 0.0 && std.is_finite() => Ok(()),
            other => Err(Error::Config(format!("invalid reward noise {other:?}"))),
        }
    }
}

impl Default for RewardNoise {
    fn default() -> Self {
        RewardNoise::Flip { p: 0.1 }
    }
}

/// Corrupts the rewards observed by the learner. Relabeled rewards computed
/// later through [`compute_reward`] are unaffected.
pub fn wrap_noisy_rewards<'a, I>(stream: I, noise: RewardNoise, rng: &'a mut Rng) -> impl Iterator<Item = Transition> + 'a
where
    I: IntoIterator<Item = Transition>,
    I::IntoIter: 'a,
{
    stream.into_iter().map(move |mut t| {
        if t.reward == -1.0 {
            match noise {
                RewardNoise::Flip { p } => {
                    if rng.random::<f64>() < p {
                        t.reward = 0.0;
                    }
                }
                RewardNoise::Gaussian { std } => {
                    if std > 0.0 {
                        t.reward += Normal::new(0.0, std).expect("std > 0").sample(rng);
                    }
                }
            }
        }
        t
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reach() -> EnvSpec {
        EnvSpec::point_reach_2d()
    }

    #[test]
    fn reset_is_deterministic_and_at_rest() {
        let spec = reach();
        let (_, a) = reset(&spec, &mut rng::from_seed(4));
        let (_, b) = reset(&spec, &mut rng::from_seed(4));
        assert_eq!(a, b);
        assert_eq!(&a.obs[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn goals_stay_in_sampling_box() {
        for spec in [reach(), EnvSpec::point_push_2d()] {
            let bx = if spec.name == EnvName::PointReach2d { REACH_GOAL_BOX } else { PUSH_GOAL_BOX };
            let mut rng = rng::from_seed(1);
            for _ in 0..1000 {
                let (_, o) = reset(&spec, &mut rng);
                assert!(o.desired_goal.iter().all(|&g| g >= bx.0 && g < bx.1));
            }
        }
    }

    #[test]
    fn zero_action_at_rest_stays_put() {
        let spec = reach();
        let s = EnvState {
            pos: [0.2, 0.3],
            vel: [0.0; 2],
            puck_pos: [0.0; 2],
            puck_vel: [0.0; 2],
            goal: [0.8, 0.8],
            t: 0,
        };
        let out = step(&spec, &s, &[0.0, 0.0]).unwrap();
        assert_eq!(out.state.pos, [0.2, 0.3]);
        assert_eq!(out.reward, -1.0);

        let at_goal = EnvState { goal: [0.21, 0.3], ..s };
        assert_eq!(step(&spec, &at_goal, &[0.0, 0.0]).unwrap().reward, 0.0);
    }

    #[test]
    fn constant_thrust_matches_hand_iteration() {
        let spec = reach();
        let mut s = EnvState {
            pos: [0.1, 0.5],
            vel: [0.0; 2],
            puck_pos: [0.0; 2],
            puck_vel: [0.0; 2],
            goal: [0.9, 0.9],
            t: 0,
        };
        // Hand iteration of v' = min(v + amax·dt, vmax), x' = x + v'·dt.
        let (mut x, mut v) = (0.1_f64, 0.0_f64);
        for _ in 0..8 {
            v = (v + 2.0 * 0.1_f64).min(1.0);
            x += v * 0.1;
            s = step(&spec, &s, &[1.0, 0.0]).unwrap().state;
            assert!((s.pos[0] - x).abs() < 1e-12);
            assert_eq!(s.pos[1], 0.5);
        }
        // Closed form while unsaturated (k ≤ 5): x = x0 + amax·dt²·k(k+1)/2.
        assert!((x - (0.1 + 0.2 * 0.1 * 15.0 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_non_finite_action() {
        let spec = reach();
        let (s, _) = reset(&spec, &mut rng::from_seed(0));
        assert!(step(&spec, &s, &[f64::NAN, 0.0]).is_err());
        assert!(step(&spec, &s, &[0.0]).is_err());
    }

    #[test]
    fn reward_rule() {
        assert_eq!(compute_reward(&[0.3, 0.3], &[0.3, 0.3], 0.05).unwrap(), 0.0);
        assert_eq!(compute_reward(&[0.0, 0.0], &[3.0, 4.0], 5.0).unwrap(), -1.0);
        assert_eq!(compute_reward(&[0.0, 0.0], &[3.0, 4.0], 5.1).unwrap(), 0.0);
        assert!(compute_reward(&[0.0], &[0.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn expert_is_deterministic_and_quiet_at_setpoint() {
        let spec = reach();
        let obs = GoalObs {
            obs: vec![0.4, 0.4, 0.0, 0.0],
            achieved_goal: vec![0.4, 0.4],
            desired_goal: vec![0.4, 0.4],
        };
        let a = scripted_expert(&spec, &obs, 0.0, &mut rng::from_seed(0));
        assert!(a.iter().all(|v| v.abs() < 1e-12));
        let obs = GoalObs {
            desired_goal: vec![0.7, 0.1],
            ..obs
        };
        let a = scripted_expert(&spec, &obs, 0.0, &mut rng::from_seed(0));
        let b = scripted_expert(&spec, &obs, 0.0, &mut rng::from_seed(99));
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_tier_has_one_expert_episode_per_hundred() {
        let d = generate_demos(&reach(), DemoQuality::Mixed1Pct, 100, 3).unwrap();
        assert_eq!(d.header.expert_episodes, 1);
        assert_eq!(d.episodes.len(), 100);
    }

    #[test]
    fn demo_file_round_trip_and_determinism() {
        let spec = reach();
        let a = generate_demos(&spec, DemoQuality::Suboptimal, 3, 8).unwrap();
        let b = generate_demos(&spec, DemoQuality::Suboptimal, 3, 8).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut ba).unwrap();
        b.write_jsonl(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let back = DemoSet::read_jsonl(&ba[..]).unwrap();
        assert_eq!(back, a);
        assert!(generate_demos(&spec, DemoQuality::Expert, 0, 1).is_err());
    }

    #[test]
    fn episodes_have_fixed_horizon_and_pure_rewards() {
        for spec in [reach(), EnvSpec::point_push_2d()] {
            let d = generate_demos(&spec, DemoQuality::Severe, 5, 2).unwrap();
            for ep in &d.episodes {
                assert_eq!(ep.len(), spec.horizon);
                for (k, t) in ep.iter().enumerate() {
                    assert_eq!(t.t, k);
                    assert_eq!(t.done, k + 1 == spec.horizon);
                    assert_eq!(t.achieved_goal, achieved_goal(&spec, &t.next_obs));
                    let r = compute_reward(&t.achieved_goal, &t.desired_goal, spec.success_eps).unwrap();
                    assert_eq!(r, t.reward);
                    assert!(t.next_obs[2].abs() <= spec.vmax && t.next_obs[3].abs() <= spec.vmax);
                }
            }
        }
    }

    fn failures(n: usize) -> Vec<Transition> {
        (0..n)
            .map(|k| Transition {
                obs: vec![0.0; 4],
                action: vec![0.0; 2],
                reward: -1.0,
                next_obs: vec![0.0; 4],
                achieved_goal: vec![0.0; 2],
                desired_goal: vec![1.0; 2],
                done: false,
                episode_id: 0,
                t: k,
            })
            .collect()
    }

    #[test]
    fn flip_noise_extremes_and_rate() {
        let mut rng = rng::from_seed(5);
        let src = failures(100);
        let same: Vec<_> = wrap_noisy_rewards(src.clone(), RewardNoise::Flip { p: 0.0 }, &mut rng).collect();
        assert_eq!(same, src);
        let all: Vec<_> = wrap_noisy_rewards(src, RewardNoise::Flip { p: 1.0 }, &mut rng).collect();
        assert!(all.iter().all(|t| t.reward == 0.0));

        let flipped = wrap_noisy_rewards(failures(10_000), RewardNoise::default(), &mut rng)
            .filter(|t| t.reward == 0.0)
            .count();
        // Binomial(10⁴, 0.1): sd = 30, so ±200 is > 6 sd.
        let frac = flipped as f64 / 10_000.0;
        assert!((0.08..=0.12).contains(&frac), "{frac}");
    }

    #[test]
    fn gaussian_noise_only_touches_failures() {
        let mut rng = rng::from_seed(6);
        let mut src = failures(10);
        src[3].reward = 0.0;
        let out: Vec<_> = wrap_noisy_rewards(src, RewardNoise::Gaussian { std: 0.5 }, &mut rng).collect();
        assert_eq!(out[3].reward, 0.0);
        assert!(out.iter().enumerate().any(|(k, t)| k != 3 && t.reward != -1.0));
        assert!(RewardNoise::Flip { p: 1.5 }.validate().is_err());
    }
}
