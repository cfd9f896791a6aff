//! Post-processing and theory checks: gradient-variance gap, weight limits,
//! decay on suboptimal demonstrations, the first-order agreement of the two
//! weight rules, weight-evolution histograms and run comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::env::Transition;
use crate::harness::MetricsRow;
use crate::rng::Rng;
use crate::weighting::{self, ensemble_stats, exp_weight, quantile_sorted, std_normal_cdf, WeightConfig, WeightMode};
use crate::{Error, Result};

/// Demo weights probed at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub step: u64,
    pub weights: Vec<f64>,
}

pub type WeightLog = Vec<WeightRecord>;

pub fn read_weight_log(path: &Path) -> Result<WeightLog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(format!("weight log {}", path.display()), e)))
        .collect()
}

/// `[Q1, median, Q3]` under the linear-interpolation rule.
pub fn quartiles(xs: &[f64]) -> Option<[f64; 3]> {
    if xs.is_empty() {
        return None;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    Some([quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75)])
}

/// Fractions of weights in `[0, 0.1)`, `[0.1, 0.9]` and `(0.9, 1]`.
pub fn bucket_fractions(weights: &[f64]) -> [f64; 3] {
    if weights.is_empty() {
        return [0.0; 3];
    }
    let mut c = [0usize; 3];
    for &w in weights {
        let k = if w < 0.1 {
            0
        } else if w <= 0.9 {
            1
        } else {
            2
        };
        c[k] += 1;
    }
    let n = weights.len() as f64;
    [c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n]
}

pub const HISTOGRAM_BINS: usize = 20;

/// Fractions per equal-width bin over `[0, 1]`; 1.0 falls in the last bin.
pub fn histogram(weights: &[f64]) -> [f64; HISTOGRAM_BINS] {
    let mut h = [0.0; HISTOGRAM_BINS];
    if weights.is_empty() {
        return h;
    }
    let inc = 1.0 / weights.len() as f64;
    for &w in weights {
        let k = ((w * HISTOGRAM_BINS as f64).floor() as isize).clamp(0, HISTOGRAM_BINS as isize - 1) as usize;
        h[k] += inc;
    }
    h
}

/// Binned CSV and SVG line chart (bucket fractions against step).
pub fn weight_evolution_report(log: &[WeightRecord]) -> Result<(String, String)> {
    if log.is_empty() {
        return Err(Error::InvalidArgument("weight log is empty".into()));
    }
    let mut csv = String::from("step,frac_low,frac_mid,frac_high");
    for b in 0..HISTOGRAM_BINS {
        let _ = write!(csv, ",bin_{b:02}");
    }
    csv.push('\n');
    for r in log {
        let f = bucket_fractions(&r.weights);
        let _ = write!(csv, "{},{},{},{}", r.step, f[0], f[1], f[2]);
        for v in histogram(&r.weights) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    Ok((csv, weight_svg(log)))
}

fn weight_svg(log: &[WeightRecord]) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let max_step = log.iter().map(|r| r.step).max().unwrap_or(0).max(1) as f64;
    let x = |s: u64| pad + (w - 2.0 * pad) * s as f64 / max_step;
    let y = |f: f64| h - pad - (h - 2.0 * pad) * f;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for (k, (label, colour)) in [("w < 0.1", "#c0392b"), ("0.1 <= w <= 0.9", "#7f8c8d"), ("w > 0.9", "#2471a3")]
        .iter()
        .enumerate()
    {
        let pts: Vec<String> = log
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.step), y(bucket_fractions(&r.weights)[k])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{colour}">{}</text>"#,
            w - pad - 110.0,
            pad + 16.0 * (k as f64 + 1.0),
            label.replace('<', "&lt;").replace('>', "&gt;")
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="12">env steps (max {max_step})</text>"#, w / 2.0 - 50.0, h - 12.0);
    let _ = writeln!(svg, r#"<text x="8" y="{:.2}" font-size="12">fraction</text>"#, pad - 12.0);
    svg.push_str("</svg>\n");
    svg
}

/// Sum of per-coordinate unbiased variances of `samples` (two-pass).
pub fn covariance_trace(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let d = samples[0].len();
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut ss = 0.0;
    for s in samples {
        for (m, v) in mean.iter().zip(s) {
            ss += (v - m) * (v - m);
        }
    }
    ss / (n - 1) as f64
}

#[derive(Debug, Clone)]
pub struct VarianceGapOptions {
    pub n_resamples: usize,
    pub batch: usize,
    pub alpha: f64,
    /// Overrides every mode's weights with 1.
    pub force_unit_weights: bool,
}

impl Default for VarianceGapOptions {
    fn default() -> Self {
        Self {
            n_resamples: 200,
            batch: 128,
            alpha: weighting::DEFAULT_ALPHA,
            force_unit_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceGapRow {
    pub mode: WeightMode,
    pub variance: f64,
    pub mean_weight: f64,
}

#[derive(Debug, Clone)]
pub struct VarianceGapReport {
    pub rows: Vec<VarianceGapRow>,
    pub warnings: Vec<String>,
}

impl VarianceGapReport {
    pub fn variance(&self, mode: WeightMode) -> Option<f64> {
        self.rows.iter().find(|r| r.mode == mode).map(|r| r.variance)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,grad_variance_trace,mean_weight\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.mode, r.variance, r.mean_weight);
        }
        s
    }
}

pub const VARIANCE_GAP_MODES: [WeightMode; 3] = [WeightMode::QfilterEnsembleMean, WeightMode::SpredP, WeightMode::SpredE];

/// Trace of the covariance of the behaviour-cloning gradient estimator
/// `(1/N_D) Σ w_k ∇‖π(s_k) − a_k‖²` over resampled demo batches, for the
/// binary ensemble filter, SPReD-P and SPReD-E at a frozen agent.
pub fn variance_gap_experiment(agent: &Agent, demos: &[Transition], opts: &VarianceGapOptions, rng: &mut Rng) -> Result<VarianceGapReport> {
    if demos.is_empty() {
        return Err(Error::InvalidArgument("no demonstrations".into()));
    }
    if opts.batch == 0 || opts.n_resamples < 2 {
        return Err(Error::InvalidArgument("batch must be ≥ 1 and n_resamples ≥ 2".into()));
    }
    let mut warnings = Vec::new();
    let with_replacement = demos.len() < opts.batch;
    if with_replacement {
        warnings.push(format!(
            "only {} demo transitions for batch size {}; sampling with replacement",
            demos.len(),
            opts.batch
        ));
    }
    let mut estimates: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(opts.n_resamples); VARIANCE_GAP_MODES.len()];
    let mut weight_sums = [0.0; 3];
    for _ in 0..opts.n_resamples {
        let idx: Vec<usize> = if with_replacement {
            (0..opts.batch).map(|_| rng.random_range(0..demos.len())).collect()
        } else {
            rand::seq::index::sample(rng, demos.len(), opts.batch).into_vec()
        };
        let batch = agent.batch(idx.iter().map(|&i| &demos[i]))?;
        let (qd, qpi) = agent.demo_q_samples(&batch)?;
        let cache = agent.actor.forward_batch(batch.states.view())?;
        let diff = cache.output() - &batch.actions;
        for (mi, &mode) in VARIANCE_GAP_MODES.iter().enumerate() {
            let cfg = WeightConfig { mode, alpha: opts.alpha };
            let weights: Vec<f64> = if opts.force_unit_weights {
                vec![1.0; opts.batch]
            } else {
                (0..opts.batch)
                    .map(|k| cfg.weight(&qd.column(k).to_vec(), &qpi.column(k).to_vec(), rng))
                    .collect::<Result<_>>()?
            };
            weight_sums[mi] += weights.iter().sum::<f64>() / opts.batch as f64;
            let mut grad_out = Array2::zeros(diff.dim());
            for (k, w) in weights.iter().enumerate() {
                let scale = 2.0 * w / opts.batch as f64;
                for a in 0..diff.ncols() {
                    grad_out[[k, a]] = scale * diff[[k, a]];
                }
            }
            let (g, _) = agent.actor.backward_batch(&cache, grad_out.view())?;
            estimates[mi].push(g.flatten());
        }
    }
    let rows = VARIANCE_GAP_MODES
        .iter()
        .enumerate()
        .map(|(mi, &mode)| VarianceGapRow {
            mode,
            variance: covariance_trace(&estimates[mi]),
            mean_weight: weight_sums[mi] / opts.n_resamples as f64,
        })
        .collect();
    Ok(VarianceGapReport { rows, warnings })
}

/// Variances of the binary estimator `Bernoulli(p)` and the continuous
/// estimator `p` with `p ~ U(0, 1)` and unit per-sample gradient.
pub fn lemma_synthetic(draws: usize, rng: &mut Rng) -> (f64, f64) {
    let mut xs = Vec::with_capacity(draws);
    let mut ys = Vec::with_capacity(draws);
    for _ in 0..draws {
        let p: f64 = rng.random();
        let u: f64 = rng.random();
        xs.push(if u < p { 1.0 } else { 0.0 });
        ys.push(p);
    }
    (two_pass_variance(&xs), two_pass_variance(&ys))
}

pub fn two_pass_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Fixed zero-mean deviation patterns for the synthetic ensembles.
fn base_deviations(m: usize) -> (Vec<f64>, Vec<f64>) {
    let center = |v: Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.into_iter().map(|x| x - mean).collect::<Vec<_>>()
    };
    let d = center((0..m).map(|i| (i as f64 * 1.7).sin() + 0.1 * i as f64).collect());
    let p = center((0..m).map(|i| (i as f64 * 0.9 + 0.4).cos()).collect());
    (d, p)
}

/// SPReD-E weight with `β = α · IQR` of the pooled (two-component mixture)
/// samples.
pub fn weight_spred_e_mixture(qd: &[f64], qpi: &[f64], alpha: f64) -> Result<f64> {
    let sd = ensemble_stats(qd)?;
    let sp = ensemble_stats(qpi)?;
    let pooled: Vec<f64> = qd.iter().chain(qpi).copied().collect();
    Ok(exp_weight(sd.mean - sp.mean, alpha * weighting::iqr(&pooled)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub advantage: f64,
    pub scale: f64,
    pub p_p: f64,
    pub p_e: f64,
    pub p_e_mixture: f64,
}

#[derive(Debug, Clone)]
pub struct LimitTable {
    pub rows: Vec<LimitRow>,
    /// One entry per limit assertion: (description, passed).
    pub checks: Vec<(String, bool)>,
}

impl LimitTable {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("advantage,spread_scale,p_p,p_e,p_e_mixture_beta\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:e},{},{},{}", r.advantage, r.scale, r.p_p, r.p_e, r.p_e_mixture);
        }
        s
    }
}

pub const LIMIT_TOL: f64 = 1e-3;

/// Weights over `A × scale`, where the base ensembles are spread around their
/// means by `scale`. Rows at scale ≤ 1e-6 and ≥ 1e6 are checked against the
/// high-certainty and high-uncertainty limits.
pub fn limit_behavior_table(a_values: &[f64], scales: &[f64], alpha: f64) -> Result<LimitTable> {
    if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("spread scales must be positive".into()));
    }
    let (dev_d, dev_p) = base_deviations(10);
    let theory = (1.0 / alpha).exp_m1().clamp(0.0, 1.0);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &a in a_values {
        for &s in scales {
            let qd: Vec<f64> = dev_d.iter().map(|d| a + s * d).collect();
            let qpi: Vec<f64> = dev_p.iter().map(|d| s * d).collect();
            let sd = ensemble_stats(&qd)?;
            let sp = ensemble_stats(&qpi)?;
            let row = LimitRow {
                advantage: a,
                scale: s,
                p_p: weighting::weight_spred_p(&sd, &sp),
                p_e: weighting::weight_spred_e(&sd, &sp, alpha),
                p_e_mixture: weight_spred_e_mixture(&qd, &qpi, alpha)?,
            };
            let near = |x: f64, t: f64| (x - t).abs() <= LIMIT_TOL;
            if s <= 1e-6 && a != 0.0 {
                let ind = if a > 0.0 { 1.0 } else { 0.0 };
                checks.push((format!("A={a} scale={s:e}: p_P -> {ind}"), near(row.p_p, ind)));
                checks.push((format!("A={a} scale={s:e}: p_E -> {ind}"), near(row.p_e, ind)));
                let t = if a > 0.0 { theory } else { 0.0 };
                checks.push((format!("A={a} scale={s:e}: mixture-beta p_E -> {t:.6}"), near(row.p_e_mixture, t)));
            }
            if s >= 1e6 {
                checks.push((format!("A={a} scale={s:e}: p_P -> 0.5"), near(row.p_p, 0.5)));
                checks.push((format!("A={a} scale={s:e}: p_E -> 0"), row.p_e <= LIMIT_TOL));
            }
            rows.push(row);
        }
    }
    Ok(LimitTable { rows, checks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub step: usize,
    pub advantage: f64,
    pub spread: f64,
    pub p_p: f64,
    pub p_e: f64,
}

/// Synthetic estimate sequence with `A_t = −Δ(1 − 2^{−t})` and spreads
/// `2^{−t}` around shared deviation patterns.
pub fn suboptimal_decay_sim(steps: usize, delta: f64, alpha: f64) -> Result<Vec<DecayRow>> {
    if steps < 2 {
        return Err(Error::InvalidArgument("steps must be at least 2".into()));
    }
    let (dev_d, dev_p) = base_deviations(10);
    (0..steps)
        .map(|t| {
            let h = 0.5f64.powi(t as i32);
            let a = -delta * (1.0 - h);
            let qd: Vec<f64> = dev_d.iter().map(|d| a + h * d).collect();
            let qpi: Vec<f64> = dev_p.iter().map(|d| h * d).collect();
            let sd = ensemble_stats(&qd)?;
            let sp = ensemble_stats(&qpi)?;
            Ok(DecayRow {
                step: t,
                advantage: a,
                spread: h,
                p_p: weighting::weight_spred_p(&sd, &sp),
                p_e: weighting::weight_spred_e(&sd, &sp, alpha),
            })
        })
        .collect()
}

pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut s = String::from("step,advantage,spread,p_p,p_e\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:e},{:e},{}", r.step, r.advantage, r.spread, r.p_p, r.p_e);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorRow {
    pub sigma: f64,
    pub ratio: f64,
    pub p_p_centered: f64,
    pub exp_form: f64,
    pub deviation: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct TaylorReport {
    pub rows: Vec<TaylorRow>,
    pub max_deviation: f64,
    pub all_within_bound: bool,
}

impl TaylorReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma,a_over_sigma,p_p_minus_half,exp_minus_one,deviation,bound\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:e},{:e},{:e},{:e}", r.sigma, r.ratio, r.p_p_centered, r.exp_form, r.deviation, r.bound);
        }
        s
    }
}

pub const TAYLOR_MAX_RATIO: f64 = 0.05;

/// Compares `p_P − ½` with the unclipped `e^{A/β} − 1` at `β = σ√(2π)`.
/// The ensembles are two-sample sets whose variances sum to `σ²`.
pub fn taylor_agreement(sigmas: &[f64], ratios: &[f64]) -> Result<TaylorReport> {
    if ratios.iter().any(|r| r.abs() > TAYLOR_MAX_RATIO) {
        return Err(Error::InvalidArgument(format!("|A|/σ must be ≤ {TAYLOR_MAX_RATIO}")));
    }
    if sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("σ must be positive".into()));
    }
    let mut rows = Vec::new();
    for &sigma in sigmas {
        for &ratio in ratios {
            let a = ratio * sigma;
            let h = sigma / 2.0;
            let sd = ensemble_stats(&[a - h, a + h])?;
            let sp = ensemble_stats(&[-h, h])?;
            let adv = sd.mean - sp.mean;
            let scale = (sd.var + sp.var).sqrt();
            let p_p_centered = std_normal_cdf(adv / scale) - 0.5;
            let beta = scale * (2.0 * std::f64::consts::PI).sqrt();
            let exp_form = (adv / beta).exp_m1();
            let r = adv / scale;
            rows.push(TaylorRow {
                sigma,
                ratio,
                p_p_centered,
                exp_form,
                deviation: (p_p_centered - exp_form).abs(),
                bound: 0.2 * r * r + 1e-12,
            });
        }
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let all_within_bound = rows.iter().all(|r| r.deviation <= r.bound);
    Ok(TaylorReport {
        rows,
        max_deviation,
        all_within_bound,
    })
}

/// Trapezoidal area under the success curve over its step range.
pub fn success_auc(rows: &[MetricsRow]) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (w[0].success_rate + w[1].success_rate) * (w[1].step - w[0].step) as f64)
        .sum()
}

/// First logged step with success ≥ `threshold`; `None` if never reached.
pub fn steps_to_success(rows: &[MetricsRow], threshold: f64) -> Option<u64> {
    rows.iter().find(|r| r.success_rate >= threshold).map(|r| r.step)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, two_pass_variance(xs).sqrt())
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub mode: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub mode: String,
    pub n: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
}

/// Final and AUC success per mode across seeds. Every mode must cover the
/// same seeds on the same step grid.
pub fn gaussian_vs_nonpara_compare(runs: &[RunRecord]) -> Result<Vec<CompareRow>> {
    let mut by_mode: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        if r.rows.is_empty() {
            return Err(Error::InvalidArgument(format!("run {}/{} has no metrics", r.mode, r.seed)));
        }
        by_mode.entry(r.mode.as_str()).or_default().push(r);
    }
    if by_mode.is_empty() {
        return Err(Error::InvalidArgument("no runs given".into()));
    }
    let key = |rs: &[&RunRecord]| {
        let mut seeds: Vec<u64> = rs.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        let grid: Vec<u64> = rs[0].rows.iter().map(|r| r.step).collect();
        (seeds, grid)
    };
    let reference = key(by_mode.values().next().expect("non-empty"));
    for (mode, rs) in &by_mode {
        let (seeds, grid) = key(rs);
        if seeds != reference.0 {
            return Err(Error::InvalidArgument(format!("mode {mode} has seeds {seeds:?}, expected {:?}", reference.0)));
        }
        if rs.iter().any(|r| r.rows.iter().map(|x| x.step).ne(grid.iter().copied())) || grid != reference.1 {
            return Err(Error::InvalidArgument(format!("mode {mode} runs are logged on a different step grid")));
        }
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("mode {mode} repeats a seed")));
        }
    }
    Ok(by_mode
        .into_iter()
        .map(|(mode, rs)| {
            let finals: Vec<f64> = rs.iter().map(|r| r.rows.last().expect("non-empty").success_rate).collect();
            let aucs: Vec<f64> = rs.iter().map(|r| success_auc(&r.rows)).collect();
            let (final_mean, final_std) = mean_std(&finals);
            let (auc_mean, auc_std) = mean_std(&aucs);
            CompareRow {
                mode: mode.to_string(),
                n: rs.len(),
                final_mean,
                final_std,
                auc_mean,
                auc_std,
            }
        })
        .collect())
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("mode,n_seeds,final_mean,final_std,auc_mean,auc_std\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.mode, r.n, r.final_mean, r.final_std, r.auc_mean, r.auc_std);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn row(step: u64, s: f64) -> MetricsRow {
        MetricsRow {
            step,
            success_rate: s,
            critic_loss: None,
            actor_loss: None,
            weight_mean: None,
            weight_quartiles: None,
            train_iterations: 0,
        }
    }

    #[test]
    fn buckets_partition() {
        let w = [0.0, 0.05, 0.1, 0.5, 0.9, 0.95, 1.0];
        let f = bucket_fractions(&w);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(f, [2.0 / 7.0, 3.0 / 7.0, 2.0 / 7.0]);
        assert_eq!(bucket_fractions(&[0.5; 9]), [0.0, 1.0, 0.0]);
        let h = histogram(&[1.0, 0.0, 0.5]);
        assert!((h[19] - 1.0 / 3.0).abs() < 1e-15 && (h[0] - 1.0 / 3.0).abs() < 1e-15 && (h[10] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn svg_is_deterministic() {
        let log = vec![
            WeightRecord { step: 0, weights: vec![0.5, 0.2] },
            WeightRecord { step: 10, weights: vec![0.05, 0.95] },
        ];
        let a = weight_evolution_report(&log).unwrap();
        let b = weight_evolution_report(&log).unwrap();
        assert_eq!(a, b);
        assert!(a.1.starts_with("<svg") && a.1.trim_end().ends_with("</svg>"));
        assert!(weight_evolution_report(&[]).is_err());
    }

    #[test]
    fn lemma_synthetic_variances() {
        let (vb, vc) = lemma_synthetic(200_000, &mut rng::from_seed(1));
        assert!((vb - 0.25).abs() < 0.01);
        assert!((vc - 1.0 / 12.0).abs() < 0.01);
    }

    #[test]
    fn covariance_trace_matches_per_coordinate_variance() {
        let s = vec![vec![1.0, 0.0], vec![3.0, 0.0], vec![5.0, 3.0]];
        assert!((covariance_trace(&s) - (4.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn limit_table_passes() {
        let t = limit_behavior_table(&[-1.0, -0.1, 0.0, 0.1, 1.0], &[1e-6, 1.0, 1e6], 10.0).unwrap();
        assert!(t.all_pass(), "{:?}", t.checks);
        let r = t.rows.iter().find(|r| r.advantage == 1.0 && r.scale == 1e-6).unwrap();
        assert!((r.p_e_mixture - (0.1f64.exp() - 1.0)).abs() < 1e-3);
        assert!(limit_behavior_table(&[1.0], &[0.0], 10.0).is_err());
    }

    #[test]
    fn decay_reaches_zero_and_control_stays_at_half() {
        let rows = suboptimal_decay_sim(40, 1.0, 10.0).unwrap();
        let last = rows.last().unwrap();
        assert!(last.p_p < 1e-3);
        assert_eq!(last.p_e, 0.0);
        let ctrl = suboptimal_decay_sim(40, 0.0, 10.0).unwrap();
        assert_eq!(ctrl.last().unwrap().p_p, 0.5);
        assert!(suboptimal_decay_sim(1, 1.0, 10.0).is_err());
    }

    #[test]
    fn taylor_examples() {
        let t = taylor_agreement(&[1.0], &[0.0, 0.01, 0.05]).unwrap();
        assert_eq!(t.rows[0].deviation, 0.0);
        assert!(t.rows[1].deviation <= 2e-5 + 1e-12);
        let lin = 0.05 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((t.rows[2].p_p_centered - lin).abs() <= t.rows[2].bound);
        assert!((t.rows[2].exp_form - lin).abs() <= t.rows[2].bound);
        assert!(t.all_within_bound);
        assert!(taylor_agreement(&[1.0], &[0.06]).is_err());
    }

    #[test]
    fn auc_and_steps_to_success() {
        let rows: Vec<_> = (0..=4).map(|i| row(i * 250, 0.5)).collect();
        assert_eq!(success_auc(&rows), 0.5 * 1000.0);
        let rows = vec![row(0, 0.0), row(10, 0.4), row(20, 0.6)];
        assert_eq!(steps_to_success(&rows, 0.5), Some(20));
        assert_eq!(steps_to_success(&rows, 0.9), None);
    }

    #[test]
    fn compare_checks_run_sets() {
        let curve = vec![row(0, 0.0), row(10, 1.0)];
        let runs: Vec<RunRecord> = ["spred-p", "nonpara-cross"]
            .iter()
            .flat_map(|m| {
                let curve = curve.clone();
                (0..5).map(move |s| RunRecord {
                    mode: m.to_string(),
                    seed: s,
                    rows: curve.clone(),
                })
            })
            .collect();
        let out = gaussian_vs_nonpara_compare(&runs).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].n, 5);
        assert_eq!((out[0].final_mean, out[0].auc_mean), (out[1].final_mean, out[1].auc_mean));
        let mut bad = runs.clone();
        bad.pop();
        assert!(gaussian_vs_nonpara_compare(&bad).is_err());
    }

    #[test]
    fn median_and_quartiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]), Some([2.0, 3.0, 4.0]));
        assert_eq!(quartiles(&[]), None);
    }
}
