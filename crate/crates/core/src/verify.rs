//! The invariant suite behind `spred verify`. Every check compares the
//! implementation against an independent oracle: central finite differences,
//! two-pass statistics, Simpson quadrature of the normal density, or direct
//! enumeration.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::agent::{critic_input, Agent, AgentConfig, Batch};
use crate::analysis;
use crate::env::{self, DemoQuality, EnvSpec, Transition};
use crate::nn::{self, mlp_shapes, Activation, OptState, ParamGrads, ParamSet};
use crate::replay::{self, Normalizer, ReplayBuffer};
use crate::rng::{self, Rng};
use crate::weighting::{self, ensemble_stats, NonparaMode};
use crate::Result;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Denominator floor for relative errors, so that components that are zero
/// up to round-off are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSummary {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Components whose ±h evaluations straddle a ReLU kink.
    pub skipped: usize,
}

fn hidden_signs(net: &ParamSet, x: &Array2<f64>) -> Result<Vec<bool>> {
    let cache = net.forward_batch(x.view())?;
    let pre = cache.pre_activations();
    Ok(pre[..pre.len() - 1].iter().flat_map(|p| p.iter().map(|v| *v > 0.0)).collect())
}

/// Random MLP with non-zero biases.
pub fn random_net(rng: &mut Rng) -> Result<ParamSet> {
    let input = rng.random_range(1..=6);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(1..=8)).collect();
    let output = rng.random_range(1..=3);
    let act = if rng.random::<bool>() {
        Activation::TanhOutput
    } else {
        Activation::LinearOutput
    };
    let mut net = ParamSet::init(&mlp_shapes(input, &hidden, output), act, rng.random())?;
    for l in net.layers_mut() {
        l.bias.mapv_inplace(|_| 0.3 * rng.sample::<f64, _>(StandardNormal));
    }
    Ok(net)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Backprop against central differences of `Σ output ⊙ output_grad` for
/// `n_nets` random networks, over every parameter and input component.
pub fn gradient_check(n_nets: usize, seed: u64) -> Result<FdSummary> {
    let mut rng = rng::from_seed(seed);
    let mut s = FdSummary {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    for _ in 0..n_nets {
        let net = random_net(&mut rng)?;
        let batch = rng.random_range(1..=3);
        let x = gaussian_matrix(batch, net.input_dim(), &mut rng);
        let og = gaussian_matrix(batch, net.output_dim(), &mut rng);
        let cache = net.forward_batch(x.view())?;
        let (grads, dx) = net.backward_batch(&cache, og.view())?;
        let objective = |n: &ParamSet, x: &Array2<f64>| -> Result<f64> { Ok((n.predict(x.view())? * &og).sum()) };

        let flat = net.flatten();
        let analytic = grads.flatten();
        let mut probe = net.clone();
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] = flat[i] + FD_STEP;
            probe.set_flat(&p)?;
            let (fp, sp) = (objective(&probe, &x)?, hidden_signs(&probe, &x)?);
            p[i] = flat[i] - FD_STEP;
            probe.set_flat(&p)?;
            let (fm, sm) = (objective(&probe, &x)?, hidden_signs(&probe, &x)?);
            if sp != sm {
                s.skipped += 1;
                continue;
            }
            s.max_rel_err = s.max_rel_err.max(rel_err(analytic[i], (fp - fm) / (2.0 * FD_STEP)));
            s.checked += 1;
        }
        for idx in ndarray::indices(x.dim()) {
            let mut xp = x.clone();
            xp[idx] += FD_STEP;
            let mut xm = x.clone();
            xm[idx] -= FD_STEP;
            if hidden_signs(&net, &xp)? != hidden_signs(&net, &xm)? {
                s.skipped += 1;
                continue;
            }
            let fd = (objective(&net, &xp)? - objective(&net, &xm)?) / (2.0 * FD_STEP);
            s.max_rel_err = s.max_rel_err.max(rel_err(dx[idx], fd));
            s.checked += 1;
        }
    }
    Ok(s)
}

/// Permutes the hidden units of a one-hidden-layer network (rows of `W1`,
/// entries of `b1`, columns of `W2`).
pub fn permute_hidden(layers: &mut [nn::LayerParams], perm: &[usize]) {
    let w1 = layers[0].weight.clone();
    let b1 = layers[0].bias.clone();
    let w2 = layers[1].weight.clone();
    for (new, &old) in perm.iter().enumerate() {
        layers[0].weight.row_mut(new).assign(&w1.row(old));
        layers[0].bias[new] = b1[old];
        layers[1].weight.column_mut(new).assign(&w2.column(old));
    }
}

/// Adam commutes with a consistent permutation of parameters, gradients and
/// moments. Returns the largest absolute mismatch over `trials` random cases.
pub fn adam_permutation_check(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let width = rng.random_range(2..=8);
        let shapes = mlp_shapes(rng.random_range(1..=4), &[width], rng.random_range(1..=3));
        let mut params = ParamSet::init(&shapes, Activation::LinearOutput, rng.random())?;
        let mut opt = OptState::new(&params);
        let random_grads = |rng: &mut Rng| {
            let mut g = ParamGrads::zeros_like(&params);
            for l in &mut g.layers {
                l.weight.mapv_inplace(|_| StandardNormal.sample(rng));
                l.bias.mapv_inplace(|_| StandardNormal.sample(rng));
            }
            g
        };
        // A few warm steps so the moments are non-trivial.
        let warm: Vec<ParamGrads> = (0..3).map(|_| random_grads(&mut rng)).collect();
        let g = random_grads(&mut rng);
        for w in &warm {
            nn::adam_step(&mut params, w, &mut opt, 1e-3)?;
        }
        let mut perm: Vec<usize> = (0..width).collect();
        perm.shuffle(&mut rng);

        let mut p_perm = params.clone();
        permute_hidden(p_perm.layers_mut(), &perm);
        let mut o_perm = opt.clone();
        permute_hidden(&mut o_perm.first_moment.layers, &perm);
        permute_hidden(&mut o_perm.second_moment.layers, &perm);
        let mut g_perm = g.clone();
        permute_hidden(&mut g_perm.layers, &perm);

        nn::adam_step(&mut params, &g, &mut opt, 1e-3)?;
        nn::adam_step(&mut p_perm, &g_perm, &mut o_perm, 1e-3)?;
        permute_hidden(params.layers_mut(), &perm);
        worst = worst.max(params.max_abs_diff(&p_perm));
    }
    Ok(worst)
}

/// `|target' − online| = (1 − τ)|target − online|` component-wise; returns
/// the largest deviation.
pub fn polyak_contraction_check(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let shapes = mlp_shapes(3, &[5], 2);
        let online = ParamSet::init(&shapes, Activation::LinearOutput, rng.random())?;
        let mut target = ParamSet::init(&shapes, Activation::LinearOutput, rng.random())?;
        let tau: f64 = rng.random();
        let before: Vec<f64> = target.flatten().iter().zip(online.flatten()).map(|(t, o)| (t - o).abs()).collect();
        nn::polyak_update(&mut target, &online, tau)?;
        for ((t, o), b) in target.flatten().iter().zip(online.flatten()).zip(before) {
            worst = worst.max(((t - o).abs() - (1.0 - tau) * b).abs());
        }
    }
    Ok(worst)
}

/// `Φ(x)` by composite Simpson quadrature of the normal density on `[0, x]`.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let n = 4000;
    let h = x / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

fn random_samples(rng: &mut Rng, m: usize, center: f64, spread: f64) -> Vec<f64> {
    (0..m)
        .map(|_| center + spread * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Range, monotonicity in A, shift and scale invariance over `pairs` random
/// ensemble pairs. Returns the number of violations.
pub fn weighting_properties(pairs: usize, seed: u64) -> Result<usize> {
    let mut rng = rng::from_seed(seed);
    let mut bad = 0;
    for _ in 0..pairs {
        let m = rng.random_range(2..=12);
        let (cd, wd) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0));
        let qd = random_samples(&mut rng, m, cd, wd);
        let (cp, wp) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0));
        let qp = random_samples(&mut rng, m, cp, wp);
        let alpha = rng.random_range(0.1..20.0);
        let sd = ensemble_stats(&qd)?;
        let sp = ensemble_stats(&qp)?;
        let pp = weighting::weight_spred_p(&sd, &sp);
        let pe = weighting::weight_spred_e(&sd, &sp, alpha);
        let npair = weighting::weight_nonpara(&qd, &qp, NonparaMode::Pairwise, &mut rng.clone())?;
        let ncross = weighting::weight_nonpara(&qd, &qp, NonparaMode::Cross, &mut rng)?;
        let in_range = |w: f64| (0.0..=1.0).contains(&w);
        if ![pp, pe, npair, ncross].iter().all(|&w| in_range(w)) {
            bad += 1;
        }

        // Monotonicity: raise A by shifting only the demo samples up.
        let bump = rng.random_range(0.0..2.0);
        let qd_up: Vec<f64> = qd.iter().map(|v| v + bump).collect();
        let sdu = ensemble_stats(&qd_up)?;
        if weighting::weight_spred_p(&sdu, &sp) < pp || weighting::weight_spred_e(&sdu, &sp, alpha) < pe {
            bad += 1;
        }

        // Shift: add c to every sample.
        let c = rng.random_range(-100.0..100.0);
        let sh = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let (qds, qps) = (sh(&qd), sh(&qp));
        let (sds, sps) = (ensemble_stats(&qds)?, ensemble_stats(&qps)?);
        let shift_ok = (weighting::weight_spred_p(&sds, &sps) - pp).abs() < 1e-9
            && (weighting::weight_spred_e(&sds, &sps, alpha) - pe).abs() < 1e-9
            && weighting::weight_nonpara(&qds, &qps, NonparaMode::Cross, &mut rng)? == ncross;
        if !shift_ok {
            bad += 1;
        }

        // Scale: multiply every sample by λ > 0.
        let lam = rng.random_range(0.01..100.0);
        let sc = |v: &[f64]| v.iter().map(|x| x * lam).collect::<Vec<_>>();
        let (sdl, spl) = (ensemble_stats(&sc(&qd))?, ensemble_stats(&sc(&qp))?);
        if (weighting::weight_spred_p(&sdl, &spl) - pp).abs() > 1e-9 || (weighting::weight_spred_e(&sdl, &spl, alpha) - pe).abs() > 1e-9 {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Welford statistics against a two-pass mean and population variance.
pub fn welford_check(n: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::from_seed(seed);
    let dim = 5;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|k| 10.0 * k as f64 + (k as f64 + 1.0) * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut norm = Normalizer::new(dim);
    for r in &rows {
        norm.update(r)?;
    }
    let mut worst: f64 = 0.0;
    for k in 0..dim {
        let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        worst = worst.max((norm.mean[k] - mean).abs()).max((norm.variance()[k] - var).abs() / var.max(1.0));
    }
    Ok(worst)
}

fn random_walk_episode(spec: &EnvSpec, seed: u64) -> Result<Vec<Transition>> {
    let mut env_rng = rng::from_seed(seed);
    let mut act_rng = rng::from_seed(seed ^ 0x5eed);
    env::rollout(spec, &mut env_rng, 0, |_| Ok((0..spec.action_dim).map(|_| act_rng.random_range(-1.0..1.0)).collect()))
}

/// Critic-loss and actor-loss gradients of a small agent against central
/// differences over every parameter. Returns the worst relative error and
/// the count of kink-straddling components skipped.
pub fn agent_gradient_check(seed: u64) -> Result<(f64, usize)> {
    let spec = EnvSpec::point_reach_2d();
    let config = AgentConfig {
        hidden_width: 6,
        ensemble_size: 3,
        q_weight: 0.7,
        bc_weight: 0.3,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(&spec, config, seed)?;
    let ep = random_walk_episode(&spec, seed)?;
    for t in &ep {
        agent.normalizer.update(&replay::obs_goal(&t.obs, &t.desired_goal))?;
    }
    let replay_b = agent.batch(ep.iter().take(5))?;
    let demo_b = agent.batch(ep.iter().skip(20).take(4))?;
    let mut rng = rng::from_seed(seed);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;

    // Critic 0 against fixed targets.
    let input = critic_input(replay_b.states.view(), replay_b.actions.view());
    let targets: Array1<f64> = (0..replay_b.len()).map(|_| rng.random_range(-3.0..0.0)).collect();
    let (_, g) = agent.critic_loss_and_grad(0, input.view(), &targets)?;
    let analytic = g.flatten();
    let flat = agent.critics[0].flatten();
    for i in 0..flat.len() {
        let mut eval = |delta: f64| -> Result<(f64, Vec<bool>)> {
            let mut p = flat.clone();
            p[i] += delta;
            agent.critics[0].set_flat(&p)?;
            let (l, _) = agent.critic_loss_and_grad(0, input.view(), &targets)?;
            Ok((l, hidden_signs(&agent.critics[0], &input)?))
        };
        let (lp, sp) = eval(FD_STEP)?;
        let (lm, sm) = eval(-FD_STEP)?;
        if sp != sm {
            skipped += 1;
            continue;
        }
        worst = worst.max(rel_err(analytic[i], (lp - lm) / (2.0 * FD_STEP)));
    }
    agent.critics[0].set_flat(&flat)?;

    // Actor: full combined loss with weights frozen.
    let weights: Vec<f64> = (0..demo_b.len()).map(|_| rng.random()).collect();
    let (_, g) = agent.actor_loss_and_grad(&replay_b, Some(&demo_b), &weights)?;
    let analytic = g.flatten();
    let flat = agent.actor.flatten();
    let all_states = ndarray::concatenate![ndarray::Axis(0), replay_b.states, demo_b.states];
    for i in 0..flat.len() {
        let mut eval = |delta: f64| -> Result<(f64, Vec<bool>)> {
            let mut p = flat.clone();
            p[i] += delta;
            agent.actor.set_flat(&p)?;
            let (l, _) = agent.actor_loss_and_grad(&replay_b, Some(&demo_b), &weights)?;
            let pi = agent.actor.predict(replay_b.states.view())?;
            let ci = critic_input(replay_b.states.view(), pi.view());
            let mut signs = hidden_signs(&agent.actor, &all_states)?;
            for c in &agent.critics {
                signs.extend(hidden_signs(c, &ci)?);
            }
            Ok((l, signs))
        };
        let (lp, sp) = eval(FD_STEP)?;
        let (lm, sm) = eval(-FD_STEP)?;
        if sp != sm {
            skipped += 1;
            continue;
        }
        worst = worst.max(rel_err(analytic[i], (lp - lm) / (2.0 * FD_STEP)));
    }
    agent.actor.set_flat(&flat)?;
    Ok((worst, skipped))
}

/// Target formula against hand arithmetic: critics with constant outputs
/// `{2, 3}` give `y = r + γ·2`.
pub fn critic_target_check() -> Result<f64> {
    let spec = EnvSpec::point_reach_2d();
    let config = AgentConfig {
        ensemble_size: 2,
        hidden_width: 4,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(&spec, config, 3)?;
    for (k, c) in agent.critic_targets.iter_mut().enumerate() {
        let last = c.layers_mut().len() - 1;
        c.layers_mut()[last].weight.fill(0.0);
        c.layers_mut()[last].bias.fill(2.0 + k as f64);
    }
    let n = 3;
    let input = spec.input_dim();
    let batch = Batch {
        states: Array2::zeros((n, input)),
        actions: Array2::zeros((n, spec.action_dim)),
        rewards: Array1::from(vec![0.0, -1.0, 0.0]),
        next_states: Array2::zeros((n, input)),
    };
    let y = agent.critic_target(&batch, &mut rng::from_seed(1))?;
    let want = [1.96, -1.0 + 1.96, 1.96];
    Ok(y.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

pub struct HerChecks {
    pub double_storage: bool,
    pub final_relabeled_reward_zero: bool,
    pub reward_recompute_consistent: bool,
}

pub fn her_checks(seed: u64) -> Result<HerChecks> {
    let spec = EnvSpec::point_reach_2d();
    let ep = random_walk_episode(&spec, seed)?;
    let mut buf = ReplayBuffer::new(10_000)?;
    buf.store_episode_with_her(&ep, spec.success_eps)?;
    let relabeled: Vec<&Transition> = buf.iter().skip(ep.len()).collect();
    let consistent = buf
        .iter()
        .all(|t| env::compute_reward(&t.achieved_goal, &t.desired_goal, spec.success_eps).is_ok_and(|r| r == t.reward));
    Ok(HerChecks {
        double_storage: buf.len() == 2 * ep.len(),
        final_relabeled_reward_zero: relabeled.last().is_some_and(|t| t.reward == 0.0),
        reward_recompute_consistent: consistent,
    })
}

/// Largest |normalized value| over extreme inputs; must not exceed 5.
pub fn normalization_range_check(seed: u64) -> Result<f64> {
    let mut rng = rng::from_seed(seed);
    let mut norm = Normalizer::new(3);
    for _ in 0..100 {
        norm.update(&[rng.random::<f64>(), rng.random::<f64>() * 1e-3, 0.5])?;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1e6..1e6)).collect();
        for v in norm.normalize(&x)? {
            worst = worst.max(v.abs());
        }
    }
    Ok(worst)
}

/// Runs the full suite.
pub fn run_all() -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let fd = gradient_check(100, 11)?;
    out.push(Check::new(
        "mlp-gradients",
        fd.max_rel_err < FD_TOL,
        format!("max rel err {:.2e} over {} components ({} kink-skipped)", fd.max_rel_err, fd.checked, fd.skipped),
    ));
    let adam = adam_permutation_check(50, 12)?;
    out.push(Check::new("adam-permutation", adam == 0.0, format!("max mismatch {adam:e}")));
    let pol = polyak_contraction_check(50, 13)?;
    out.push(Check::new("polyak-contraction", pol < 1e-12, format!("max deviation {pol:e}")));

    let phi1 = weighting::std_normal_cdf(1.0);
    let quad_err = [-6.0, -2.5, -1.0, -0.3, 0.0, 0.4, 1.0, 2.0, 3.5, 7.0]
        .iter()
        .map(|&x| (weighting::std_normal_cdf(x) - normal_cdf_quadrature(x)).abs())
        .fold(0.0, f64::max);
    out.push(Check::new(
        "normal-cdf",
        (phi1 - 0.8413447).abs() < 1e-6 && quad_err < 1e-7,
        format!("Φ(1) = {phi1:.9}, max |Φ − quadrature| = {quad_err:.1e}"),
    ));
    let viol = weighting_properties(10_000, 14)?;
    out.push(Check::new("weight-invariants", viol == 0, format!("{viol} violations over 10^4 pairs")));

    let limits = analysis::limit_behavior_table(&[-1.0, -0.1, 0.0, 0.1, 1.0], &[1e-6, 1e-3, 1.0, 1e3, 1e6], weighting::DEFAULT_ALPHA)?;
    let failed: Vec<&String> = limits.checks.iter().filter(|c| !c.1).map(|c| &c.0).collect();
    out.push(Check::new("limit-behaviour", failed.is_empty(), format!("{} assertions, failed: {failed:?}", limits.checks.len())));
    let decay = analysis::suboptimal_decay_sim(40, 1.0, weighting::DEFAULT_ALPHA)?;
    let last = decay.last().expect("40 rows");
    out.push(Check::new(
        "suboptimal-decay",
        last.p_p < 1e-3 && last.p_e < 1e-3,
        format!("final p_P {:.2e}, p_E {:.2e}", last.p_p, last.p_e),
    ));
    let ratios: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.005).collect();
    let taylor = analysis::taylor_agreement(&[0.01, 0.1, 1.0, 10.0], &ratios)?;
    out.push(Check::new("taylor-agreement", taylor.all_within_bound, format!("max deviation {:.2e}", taylor.max_deviation)));
    let (vb, vc) = analysis::lemma_synthetic(1_000_000, &mut rng::from_seed(15));
    out.push(Check::new(
        "variance-gap-synthetic",
        (vb - 0.25).abs() <= 0.005 && (vc - 1.0 / 12.0).abs() <= 0.005,
        format!("Var(binary) {vb:.5}, Var(continuous) {vc:.5}"),
    ));

    let her = her_checks(16)?;
    out.push(Check::new(
        "her-storage",
        her.double_storage && her.final_relabeled_reward_zero && her.reward_recompute_consistent,
        format!(
            "double {} / final relabeled reward 0 {} / rewards recomputed {}",
            her.double_storage, her.final_relabeled_reward_zero, her.reward_recompute_consistent
        ),
    ));
    let w = welford_check(10_000, 17)?;
    out.push(Check::new("welford", w < 1e-9, format!("max deviation from two-pass {w:.1e}")));
    let nr = normalization_range_check(18)?;
    out.push(Check::new("normalizer-range", nr <= replay::CLIP_NORMALIZED, format!("max |x̂| {nr}")));

    let (agent_err, agent_skip) = agent_gradient_check(19)?;
    out.push(Check::new(
        "agent-gradients",
        agent_err < FD_TOL,
        format!("max rel err {agent_err:.2e} ({agent_skip} kink-skipped)"),
    ));
    let ct = critic_target_check()?;
    out.push(Check::new("critic-target", ct < 1e-12, format!("max |y − hand value| {ct:e}")));

    let spec = EnvSpec::point_reach_2d();
    let mut noise_rng = rng::from_seed(20);
    let expert = crate::agent::evaluate_policy(&spec, 100, 20, |obs| Ok(env::scripted_expert(&spec, obs, DemoQuality::Expert.noise_std(), &mut noise_rng)))?;
    out.push(Check::new("expert-success", expert >= 0.95, format!("scripted expert success {expert:.2}")));

    Ok(out)
}
