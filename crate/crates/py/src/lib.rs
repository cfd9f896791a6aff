//! Python bindings: environments, weighting rules, the normalizer, demo
//! generation, training, evaluation and the invariant checks.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spred::agent::Agent as CoreAgent;
use spred::env::{self, DemoQuality, EnvName, EnvSpec, EnvState, GoalObs};
use spred::harness::{self, RunConfig};
use spred::replay;
use spred::rng::{self, Rng};
use spred::weighting::{self, WeightConfig, WeightMode};
use spred::{analysis, verify, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Obs = (Vec<f64>, Vec<f64>, Vec<f64>);

fn unpack(o: &GoalObs) -> Obs {
    (o.obs.clone(), o.achieved_goal.clone(), o.desired_goal.clone())
}

/// A goal-conditioned point-mass task. `reset` and `step` return
/// `(obs, achieved_goal, desired_goal)`.
#[pyclass(name = "Env")]
struct PyEnv {
    spec: EnvSpec,
    rng: Rng,
    state: Option<(EnvState, GoalObs)>,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (name = "point-reach-2d", seed = 0))]
    fn new(name: &str, seed: u64) -> PyResult<Self> {
        let name: EnvName = name.parse().map_err(to_py)?;
        Ok(Self {
            spec: EnvSpec::from_name(name),
            rng: rng::stream(seed, rng::Stream::Env),
            state: None,
        })
    }

    fn reset(&mut self) -> Obs {
        let (state, obs) = env::reset(&self.spec, &mut self.rng);
        let out = unpack(&obs);
        self.state = Some((state, obs));
        out
    }

    /// Returns `(obs, achieved_goal, desired_goal, reward, done)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, f64, bool)> {
        let (state, _) = self.state.as_ref().ok_or_else(|| PyValueError::new_err("call reset() first"))?;
        let out = env::step(&self.spec, state, &action).map_err(to_py)?;
        let (o, ag, dg) = unpack(&out.obs);
        self.state = Some((out.state, out.obs));
        Ok((o, ag, dg, out.reward, out.done))
    }

    /// Scripted demonstrator action for the current observation.
    #[pyo3(signature = (noise_std = 0.0))]
    fn expert_action(&mut self, noise_std: f64) -> PyResult<Vec<f64>> {
        let (_, obs) = self.state.as_ref().ok_or_else(|| PyValueError::new_err("call reset() first"))?;
        Ok(env::scripted_expert(&self.spec, obs, noise_std, &mut self.rng))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.spec.name.as_str()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.spec.obs_dim
    }

    #[getter]
    fn goal_dim(&self) -> usize {
        self.spec.goal_dim
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    #[getter]
    fn success_eps(&self) -> f64 {
        self.spec.success_eps
    }
}

/// Running mean/variance with clipped normalization.
#[pyclass(name = "Normalizer")]
struct PyNormalizer(replay::Normalizer);

#[pymethods]
impl PyNormalizer {
    #[new]
    fn new(dim: usize) -> Self {
        Self(replay::Normalizer::new(dim))
    }

    fn update(&mut self, x: Vec<f64>) -> PyResult<()> {
        self.0.update(&x).map_err(to_py)
    }

    fn normalize(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.normalize(&x).map_err(to_py)
    }

    #[getter]
    fn count(&self) -> u64 {
        self.0.count
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean.clone()
    }

    #[getter]
    fn variance(&self) -> Vec<f64> {
        self.0.variance()
    }
}

/// A trained agent loaded from a checkpoint file.
#[pyclass(name = "Agent")]
struct PyAgent(CoreAgent);

#[pymethods]
impl PyAgent {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = harness::load_checkpoint(&path).map_err(to_py)?;
        Ok(Self(ckpt.into_agent().map_err(to_py)?))
    }

    /// Greedy action for an observation and desired goal.
    fn act(&self, obs: Vec<f64>, desired_goal: Vec<f64>) -> PyResult<Vec<f64>> {
        let achieved_goal = env::achieved_goal(&self.0.spec, &obs);
        let o = GoalObs {
            obs,
            achieved_goal,
            desired_goal,
        };
        self.0.select_action(&o, false, &mut rng::from_seed(0)).map_err(to_py)
    }

    /// Q-value of every ensemble member at one state-action pair.
    fn q_values(&self, obs: Vec<f64>, desired_goal: Vec<f64>, action: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = self.0.normalized_input(&obs, &desired_goal).map_err(to_py)?;
        let s = Array2::from_shape_vec((1, x.len()), x).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let a = Array2::from_shape_vec((1, action.len()), action).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let q = self.0.ensemble_q(s.view(), a.view(), false).map_err(to_py)?;
        Ok(q.column(0).to_vec())
    }

    #[pyo3(signature = (episodes = 25, seed = 0))]
    fn evaluate(&self, py: Python<'_>, episodes: usize, seed: u64) -> PyResult<f64> {
        py.detach(|| self.0.evaluate(episodes, seed)).map_err(to_py)
    }

    #[getter]
    fn ensemble_size(&self) -> usize {
        self.0.ensemble_size()
    }

    #[getter]
    fn weight_mode(&self) -> String {
        self.0.config.weighting.mode.to_string()
    }
}

#[pyfunction]
fn compute_reward(achieved_goal: Vec<f64>, desired_goal: Vec<f64>, success_eps: f64) -> PyResult<f64> {
    env::compute_reward(&achieved_goal, &desired_goal, success_eps).map_err(to_py)
}

/// `(mean, unbiased variance, interquartile range)` of ensemble samples.
#[pyfunction]
fn ensemble_stats(samples: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let s = weighting::ensemble_stats(&samples).map_err(to_py)?;
    Ok((s.mean, s.var, s.iqr))
}

#[pyfunction]
fn std_normal_cdf(x: f64) -> f64 {
    weighting::std_normal_cdf(x)
}

/// Behaviour-cloning weight of one demonstration under `mode`, given the
/// ensemble's Q samples at the demo action and at the policy action.
#[pyfunction]
#[pyo3(signature = (mode, q_demo, q_policy, alpha = weighting::DEFAULT_ALPHA, seed = 0))]
fn weight(mode: &str, q_demo: Vec<f64>, q_policy: Vec<f64>, alpha: f64, seed: u64) -> PyResult<f64> {
    let mode: WeightMode = mode.parse().map_err(to_py)?;
    let cfg = WeightConfig { mode, alpha };
    cfg.validate().map_err(to_py)?;
    cfg.weight(&q_demo, &q_policy, &mut rng::from_seed(seed)).map_err(to_py)
}

/// Writes a demo file; returns `(transitions, demonstrator success rate)`.
#[pyfunction]
#[pyo3(signature = (out, env = "point-reach-2d", quality = "suboptimal", episodes = 20, seed = 0))]
fn generate_demos(out: PathBuf, env: &str, quality: &str, episodes: usize, seed: u64) -> PyResult<(usize, f64)> {
    let name: EnvName = env.parse().map_err(to_py)?;
    let quality: DemoQuality = quality.parse().map_err(to_py)?;
    let demos = env::generate_demos(&EnvSpec::from_name(name), quality, episodes, seed).map_err(to_py)?;
    demos.save(&out).map_err(to_py)?;
    Ok((demos.num_transitions(), demos.header.success_rate))
}

/// Trains from a JSON config file. Returns a dict with the final success
/// rate, step and iteration counts, the output directory and the per-eval
/// success curve.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None, seed = None))]
fn train<'py>(py: Python<'py>, config: PathBuf, out_dir: Option<PathBuf>, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = RunConfig::load(&config).map_err(to_py)?;
    if let Some(o) = out_dir {
        cfg.out_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let art = py.detach(|| harness::run_training(&cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("final_success", art.final_success())?;
    d.set_item("total_env_steps", art.total_env_steps)?;
    d.set_item("train_iterations", art.train_iterations)?;
    d.set_item("out_dir", art.out_dir.clone())?;
    d.set_item("steps", art.rows.iter().map(|r| r.step).collect::<Vec<_>>())?;
    d.set_item("success", art.rows.iter().map(|r| r.success_rate).collect::<Vec<_>>())?;
    Ok(d)
}

/// Greedy evaluation of a checkpoint; writes `eval.csv` into `out_dir`
/// (default: the checkpoint's directory).
#[pyfunction]
#[pyo3(signature = (checkpoint, episodes = 25, seed = None, out_dir = None))]
fn evaluate(py: Python<'_>, checkpoint: PathBuf, episodes: usize, seed: Option<u64>, out_dir: Option<PathBuf>) -> PyResult<f64> {
    let dir = out_dir.unwrap_or_else(|| checkpoint.parent().map(|p| p.to_path_buf()).unwrap_or_default());
    py.detach(|| harness::run_eval(&checkpoint, Some(episodes), seed, &dir)).map_err(to_py)
}

/// `(Var of the binary weight, Var of the continuous weight)` on the
/// synthetic uniform-advantage example.
#[pyfunction]
#[pyo3(signature = (draws = 1_000_000, seed = 0))]
fn lemma_synthetic(draws: usize, seed: u64) -> (f64, f64) {
    analysis::lemma_synthetic(draws, &mut rng::from_seed(seed))
}

/// Runs the invariant suite; a list of `(name, passed, detail)`.
#[pyfunction(name = "verify")]
fn run_verify(py: Python<'_>) -> PyResult<Vec<(String, bool, String)>> {
    let checks = py.detach(verify::run_all).map_err(to_py)?;
    Ok(checks.into_iter().map(|c| (c.name.to_string(), c.passed, c.detail)).collect())
}

#[pymodule]
#[pyo3(name = "spred")]
fn spred_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyNormalizer>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(compute_reward, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_stats, m)?)?;
    m.add_function(wrap_pyfunction!(std_normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(weight, m)?)?;
    m.add_function(wrap_pyfunction!(generate_demos, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add("WEIGHT_MODES", WeightMode::ALL.iter().map(|w| w.to_string()).collect::<Vec<_>>())?;
    Ok(())
}
