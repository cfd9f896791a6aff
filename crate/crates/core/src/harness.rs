//! Run configuration, the training loop, metric logging and checkpointing.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentCheckpoint, AgentConfig, TrainRngs};
use crate::analysis::{quartiles, WeightRecord};
use crate::env::{self, DemoSet, EnvName, EnvSpec, RewardNoise};
use crate::replay::{obs_goal, ReplayBuffer, DEFAULT_CAPACITY};
use crate::rng::{self, Stream};
use crate::{Error, Result};

pub const METRICS_HEADER: &str =
    "step,success_rate,critic_loss,actor_loss,weight_mean,weight_q1,weight_median,weight_q3,train_iterations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvName,
    pub agent: AgentConfig,
    pub demo_file: Option<PathBuf>,
    pub total_env_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Must be a multiple of `eval_every`.
    pub checkpoint_every: u64,
    pub seed: u64,
    pub noisy_reward: Option<RewardNoise>,
    pub replay_capacity: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvName::PointReach2d,
            agent: AgentConfig::default(),
            demo_file: None,
            total_env_steps: 100_000,
            eval_every: 5_000,
            eval_episodes: 25,
            checkpoint_every: 50_000,
            seed: 0,
            noisy_reward: None,
            replay_capacity: DEFAULT_CAPACITY,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.agent.use_demos && self.demo_file.is_none() {
            return Err(Error::Config("use_demos = true requires demo_file".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.checkpoint_every == 0 || self.checkpoint_every % self.eval_every != 0 {
            return Err(Error::Config(format!(
                "checkpoint_every ({}) must be a positive multiple of eval_every ({})",
                self.checkpoint_every, self.eval_every
            )));
        }
        if let Some(noise) = &self.noisy_reward {
            noise.validate()?;
        }
        let spec = EnvSpec::from_name(self.env);
        if self.replay_capacity < 2 * spec.horizon {
            return Err(Error::Config("replay_capacity cannot hold one HER episode".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(format!("config {}", path.display()), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("run config", e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// One metrics row. Loss and weight cells are `None` when nothing was
/// measured in the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub success_rate: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub weight_mean: Option<f64>,
    pub weight_quartiles: Option<[f64; 3]>,
    pub train_iterations: u64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map(|x| format!("{x}")).unwrap_or_default()
        }
        let q = self.weight_quartiles;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            self.success_rate,
            cell(self.critic_loss),
            cell(self.actor_loss),
            cell(self.weight_mean),
            cell(q.map(|q| q[0])),
            cell(q.map(|q| q[1])),
            cell(q.map(|q| q[2])),
            self.train_iterations
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Parses `metrics.csv` back into rows.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text).map_err(|msg| Error::Config(format!("{}: {msg}", path.display())))
}

pub fn parse_metrics(text: &str) -> std::result::Result<Vec<MetricsRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        _ => return Err("missing or unexpected metrics header".into()),
    }
    let opt = |s: &str| -> std::result::Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("bad number '{s}': {e}"))
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 9 {
            return Err(format!("row {} has {} cells", i + 1, c.len()));
        }
        let q = match (opt(c[5])?, opt(c[6])?, opt(c[7])?) {
            (Some(a), Some(b), Some(d)) => Some([a, b, d]),
            _ => None,
        };
        rows.push(MetricsRow {
            step: c[0].parse().map_err(|e| format!("bad step '{}': {e}", c[0]))?,
            success_rate: c[1].parse().map_err(|e| format!("bad success_rate '{}': {e}", c[1]))?,
            critic_loss: opt(c[2])?,
            actor_loss: opt(c[3])?,
            weight_mean: opt(c[4])?,
            weight_quartiles: q,
            train_iterations: c[8].parse().map_err(|e| format!("bad train_iterations '{}': {e}", c[8]))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub weight_log: Vec<WeightRecord>,
    pub total_env_steps: u64,
    pub train_iterations: u64,
}

impl RunArtifacts {
    pub fn final_success(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.success_rate)
    }
}

/// Loads a demo file and checks that it was recorded on `spec`.
pub fn load_demos_for(path: &Path, spec: &EnvSpec) -> Result<DemoSet> {
    let demos = DemoSet::load(path)?;
    let h = &demos.header.env_spec;
    if h.obs_dim != spec.obs_dim {
        return Err(Error::DimMismatch {
            what: "demo obs_dim",
            expected: spec.obs_dim,
            got: h.obs_dim,
        });
    }
    if h.goal_dim != spec.goal_dim || h.action_dim != spec.action_dim {
        return Err(Error::DimMismatch {
            what: "demo goal/action dim",
            expected: spec.goal_dim + spec.action_dim,
            got: h.goal_dim + h.action_dim,
        });
    }
    if h.name != spec.name {
        return Err(Error::Config(format!("demos were recorded on {}, run uses {}", h.name, spec.name)));
    }
    if demos.num_transitions() == 0 {
        return Err(Error::Config(format!("{} holds no transitions", path.display())));
    }
    Ok(demos)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn save_checkpoint(path: &Path, ckpt: &AgentCheckpoint) -> Result<()> {
    let text = serde_json::to_string(ckpt).map_err(|e| Error::json("checkpoint", e))?;
    write_file(path, &text)
}

pub fn load_checkpoint(path: &Path) -> Result<AgentCheckpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(format!("checkpoint {}", path.display()), e))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

struct EvalLog {
    started: Instant,
    rows: Vec<MetricsRow>,
    weight_log: Vec<WeightRecord>,
    timing: String,
    critic_losses: Vec<f64>,
    actor_losses: Vec<f64>,
}

impl EvalLog {
    fn push(&mut self, step: u64, success_rate: f64, probe: Option<Vec<f64>>, train_iterations: u64) {
        let (weight_mean, weight_quartiles) = match &probe {
            Some(w) => (mean(w), quartiles(w)),
            None => (None, None),
        };
        self.rows.push(MetricsRow {
            step,
            success_rate,
            critic_loss: mean(&self.critic_losses),
            actor_loss: mean(&self.actor_losses),
            weight_mean,
            weight_quartiles,
            train_iterations,
        });
        if let Some(weights) = probe {
            self.weight_log.push(WeightRecord { step, weights });
        }
        self.critic_losses.clear();
        self.actor_losses.clear();
        let _ = writeln!(self.timing, "{step},{:.3}", self.started.elapsed().as_secs_f64());
    }
}

/// Collect / HER-store / train until `total_env_steps`, writing
/// `metrics.csv`, `timing.csv`, `weights.jsonl`, `config.resolved.json`,
/// periodic checkpoints and `final.json` under `out_dir`.
pub fn run_training(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let spec = EnvSpec::from_name(config.env);
    let out = config.out_dir.clone();
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    config.save(&out.join("config.resolved.json"))?;

    let demos = match (&config.demo_file, config.agent.use_demos) {
        (Some(path), true) => Some(load_demos_for(path, &spec)?),
        _ => None,
    };
    let seed = config.seed;
    let mut agent = Agent::new(&spec, config.agent.clone(), seed)?;
    let demo_buf = match &demos {
        Some(d) => {
            agent.normalizer.init_from_demos(d)?;
            Some(ReplayBuffer::from_transitions(d.transitions().cloned().collect())?)
        }
        None => None,
    };
    let mut replay = ReplayBuffer::new(config.replay_capacity)?;

    let mut env_rng = rng::stream(seed, Stream::Env);
    let mut explore_rng = rng::stream(seed, Stream::Exploration);
    let mut noise_rng = rng::stream(seed, Stream::RewardNoise);
    let mut probe_rng = rng::from_seed(rng::derive_seed(seed, Stream::Weights, 1));
    let mut rngs = TrainRngs::from_master(seed);
    let updates = agent.config.updates_per_episode(&spec);
    let warmup = agent.config.warmup_steps as u64;

    let mut log = EvalLog {
        started: Instant::now(),
        rows: Vec::new(),
        weight_log: Vec::new(),
        timing: String::from("step,wall_seconds\n"),
        critic_losses: Vec::new(),
        actor_losses: Vec::new(),
    };
    let mut steps: u64 = 0;
    let mut iterations: u64 = 0;
    let mut episode_id: u64 = 0;
    let mut next_eval = config.eval_every;
    let mut record = |agent: &Agent, log: &mut EvalLog, step: u64, iterations: u64| -> Result<()> {
        let success_rate = agent.evaluate(config.eval_episodes, seed)?;
        let probe = match &demo_buf {
            Some(buf) => Some(agent.demo_weights(&agent.batch(buf.iter())?, &mut probe_rng)?),
            None => None,
        };
        log.push(step, success_rate, probe, iterations);
        Ok(())
    };
    record(&agent, &mut log, 0, 0)?;

    while steps < config.total_env_steps {
        let episode = {
            let mut t: u64 = 0;
            let agent_ref = &agent;
            env::rollout(&spec, &mut env_rng, episode_id, |obs| {
                let a = if steps + t < warmup {
                    agent_ref.random_action(&mut explore_rng)
                } else {
                    agent_ref.select_action(obs, true, &mut explore_rng)?
                };
                t += 1;
                Ok(a)
            })?
        };
        episode_id += 1;
        steps += episode.len() as u64;
        let episode: Vec<_> = match config.noisy_reward {
            Some(noise) => env::wrap_noisy_rewards(episode, noise, &mut noise_rng).collect(),
            None => episode,
        };
        for tr in &episode {
            agent.normalizer.update(&obs_goal(&tr.obs, &tr.desired_goal))?;
        }
        replay.store_episode_with_her(&episode, spec.success_eps)?;

        if steps >= warmup {
            for _ in 0..updates {
                let m = agent.train_iteration(&replay, demo_buf.as_ref(), &mut rngs)?;
                if m.critic_losses.iter().any(|l| !l.is_finite()) || !m.actor_loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at env step {steps}, iteration {iterations}: critic {:?}, actor {}",
                        m.critic_losses, m.actor_loss
                    )));
                }
                log.critic_losses.extend(&m.critic_losses);
                log.actor_losses.push(m.actor_loss);
                iterations += 1;
            }
        }

        while next_eval <= steps && next_eval <= config.total_env_steps {
            record(&agent, &mut log, steps, iterations)?;
            if next_eval % config.checkpoint_every == 0 {
                let path = ckpt_dir.join(format!("step_{next_eval}.json"));
                save_checkpoint(&path, &AgentCheckpoint::new(&agent, steps, seed))?;
            }
            // Several cadence points can fall inside one episode; log once.
            while next_eval <= steps {
                next_eval += config.eval_every;
            }
        }
    }

    save_checkpoint(&out.join("final.json"), &AgentCheckpoint::new(&agent, steps, seed))?;
    write_file(&out.join("metrics.csv"), &metrics_csv(&log.rows))?;
    write_file(&out.join("timing.csv"), &log.timing)?;
    let mut wl = String::new();
    for r in &log.weight_log {
        wl.push_str(&serde_json::to_string(r).map_err(|e| Error::json("weight record", e))?);
        wl.push('\n');
    }
    write_file(&out.join("weights.jsonl"), &wl)?;

    Ok(RunArtifacts {
        out_dir: out,
        rows: log.rows,
        weight_log: log.weight_log,
        total_env_steps: steps,
        train_iterations: iterations,
    })
}

/// Greedy evaluation of a saved checkpoint. Writes `eval.csv` into `out_dir`.
pub fn run_eval(checkpoint: &Path, episodes: Option<usize>, seed: Option<u64>, out_dir: &Path) -> Result<f64> {
    let ckpt = load_checkpoint(checkpoint)?;
    let seed = seed.unwrap_or(ckpt.eval_seed);
    let steps = ckpt.total_env_steps;
    let agent = ckpt.into_agent()?;
    let episodes = episodes.unwrap_or(25);
    let rate = agent.evaluate(episodes, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut f = fs::File::create(out_dir.join("eval.csv")).map_err(|e| Error::io(out_dir, e))?;
    writeln!(f, "checkpoint,total_env_steps,episodes,seed,success_rate")
        .and_then(|_| writeln!(f, "{},{steps},{episodes},{seed},{rate}", checkpoint.display()))
        .map_err(|e| Error::io(out_dir, e))?;
    Ok(rate)
}
