#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ndarray::Array2;
use spred::agent::AgentConfig;
use spred::env::EnvName;
use spred::harness::RunConfig;
use spred::nn::ParamSet;
use spred::weighting::{WeightConfig, WeightMode};

/// Unbiased variance by the two-pass formula.
pub fn two_pass_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Population mean and variance by the two-pass formula.
pub fn two_pass_population(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Straight-line re-evaluation of the MLP: ReLU hidden layers, linear or
/// tanh head, weights stored (out, in).
pub fn reference_forward(net: &ParamSet, x: &[f64]) -> Vec<f64> {
    let layers = net.layers();
    let mut h = x.to_vec();
    for (k, l) in layers.iter().enumerate() {
        let mut next = vec![0.0; l.weight.nrows()];
        for (o, v) in next.iter_mut().enumerate() {
            let mut acc = l.bias[o];
            for (i, hi) in h.iter().enumerate() {
                acc += l.weight[[o, i]] * hi;
            }
            *v = if k + 1 < layers.len() { acc.max(0.0) } else { acc };
        }
        h = next;
    }
    if net.activation() == spred::nn::Activation::TanhOutput {
        h.iter_mut().for_each(|v| *v = v.tanh());
    }
    h
}

/// `Σ_b Σ_j out[b, j]·g[b, j]` through the reference forward pass.
pub fn reference_objective(net: &ParamSet, x: &Array2<f64>, g: &Array2<f64>) -> f64 {
    x.rows()
        .into_iter()
        .zip(g.rows())
        .map(|(xr, gr)| reference_forward(net, &xr.to_vec()).iter().zip(gr).map(|(o, gi)| o * gi).sum::<f64>())
        .sum()
}

/// Whether any hidden pre-activation changes sign between two parameter
/// vectors (central differences are invalid across a ReLU kink).
pub fn crosses_kink(a: &ParamSet, b: &ParamSet, x: &Array2<f64>) -> bool {
    let sa = a.forward_batch(x.view()).unwrap();
    let sb = b.forward_batch(x.view()).unwrap();
    let (pa, pb) = (sa.pre_activations(), sb.pre_activations());
    pa[..pa.len() - 1]
        .iter()
        .zip(&pb[..pb.len() - 1])
        .any(|(u, v)| u.iter().zip(v).any(|(p, q)| (*p > 0.0) != (*q > 0.0)))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between backprop parameter gradients and central
/// differences (h = 1e-5) of the reference objective.
pub fn fd_param_error(net: &ParamSet, x: &Array2<f64>, g: &Array2<f64>) -> f64 {
    let cache = net.forward_batch(x.view()).unwrap();
    let (grads, _) = net.backward_batch(&cache, g.view()).unwrap();
    let analytic = grads.flatten();
    let flat = net.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut plus = net.clone();
        let mut minus = net.clone();
        let mut p = flat.clone();
        p[i] += h;
        plus.set_flat(&p).unwrap();
        p[i] -= 2.0 * h;
        minus.set_flat(&p).unwrap();
        if crosses_kink(&plus, &minus, x) {
            continue;
        }
        let fd = (reference_objective(&plus, x, g) - reference_objective(&minus, x, g)) / (2.0 * h);
        worst = worst.max(rel_err(analytic[i], fd));
    }
    worst
}

/// The scaled-down configuration used for the learning experiments.
pub fn desk_agent(mode: Option<WeightMode>) -> AgentConfig {
    let demo_batch = 32;
    let mut a = AgentConfig {
        hidden_width: 32,
        replay_batch: 128,
        demo_batch,
        q_weight: 1e-3,
        bc_weight: 1.0 / (128.0 * demo_batch as f64),
        tau: 0.01,
        updates_per_episode: Some(5),
        warmup_steps: 10 * 128,
        ..AgentConfig::default()
    };
    match mode {
        Some(mode) => {
            a.use_demos = true;
            a.weighting = WeightConfig { mode, alpha: 10.0 };
        }
        None => {
            a.use_demos = false;
            a.ensemble_size = 2;
        }
    }
    a
}

pub fn desk_run(mode: Option<WeightMode>, demo_file: Option<&Path>, seed: u64, steps: u64, out: PathBuf) -> RunConfig {
    RunConfig {
        env: EnvName::PointReach2d,
        agent: desk_agent(mode),
        demo_file: demo_file.map(Path::to_path_buf),
        total_env_steps: steps,
        eval_every: 5_000,
        eval_episodes: 25,
        checkpoint_every: 50_000,
        seed,
        noisy_reward: None,
        replay_capacity: 1_000_000,
        out_dir: out,
    }
}
