//! Demonstration weights from an ensemble of Q-estimates.
//!
//! For a demo pair `(s_d, a_d)` the ensemble yields two sample sets,
//! `Q_i(s_d, a_d)` and `Q_i(s_d, π(s_d))`. Every rule below maps the pair of
//! sets to a weight in `[0, 1]` on the behaviour-cloning term. Comparisons are
//! strict everywhere: ties mean "do not imitate".
//!
//! Quantiles use linear interpolation at position `q·(m − 1)` of the sorted
//! samples; variance is the unbiased `(m − 1)` form.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleQStats {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub var: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Interquartile range under the linear-interpolation rule.
pub fn iqr(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)).max(0.0)
}

pub fn ensemble_stats(qvals: &[f64]) -> Result<EnsembleQStats> {
    let m = qvals.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("ensemble statistics need at least 2 samples, got {m}")));
    }
    let mean = qvals.iter().sum::<f64>() / m as f64;
    let var = qvals.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Ok(EnsembleQStats {
        samples: qvals.to_vec(),
        mean,
        var,
        iqr: iqr(qvals),
    })
}

/// Binary Q-filter: 1 iff the demo estimate strictly beats the policy's.
/// `ensemble_mean = false` compares the first critic only.
pub fn weight_qfilter(stats_d: &EnsembleQStats, stats_pi: &EnsembleQStats, ensemble_mean: bool) -> f64 {
    let (d, p) = if ensemble_mean {
        (stats_d.mean, stats_pi.mean)
    } else {
        (stats_d.samples[0], stats_pi.samples[0])
    };
    if d > p {
        1.0
    } else {
        0.0
    }
}

/// Standard normal CDF via `Φ(x) = ½·erfc(−x/√2)`.
///
/// `erfc` is the fdlibm rational approximation (libm), accurate to a few ulp,
/// so `|Φ̃(x) − Φ(x)|` stays far below 1e-7 everywhere.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability-of-improvement weight `Φ(A / sqrt(σ_d² + σ_π²))`.
pub fn weight_spred_p(stats_d: &EnsembleQStats, stats_pi: &EnsembleQStats) -> f64 {
    let a = stats_d.mean - stats_pi.mean;
    let scale = (stats_d.var + stats_pi.var).sqrt();
    if scale == 0.0 {
        return if a > 0.0 {
            1.0
        } else if a < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    std_normal_cdf(a / scale).clamp(0.0, 1.0)
}

/// Exponential weight `clip(exp(A/β) − 1, 0, 1)` with
/// `β = α · (IQR_d + IQR_π) / 2`.
pub fn weight_spred_e(stats_d: &EnsembleQStats, stats_pi: &EnsembleQStats, alpha: f64) -> f64 {
    let a = stats_d.mean - stats_pi.mean;
    let beta = alpha * 0.5 * (stats_d.iqr + stats_pi.iqr);
    exp_weight(a, beta)
}

/// `clip(exp(A/β) − 1, 0, 1)`, with the `β = 0` limit `1_{A>0}`.
pub fn exp_weight(advantage: f64, beta: f64) -> f64 {
    if advantage <= 0.0 {
        return 0.0;
    }
    if beta <= 0.0 {
        return 1.0;
    }
    (advantage / beta).exp_m1().clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonparaMode {
    /// `qd[i]` against `qpi[σ(i)]` for one random permutation `σ`.
    Pairwise,
    /// All `m × m` pairs.
    Cross,
}

/// Fraction of sample comparisons won by the demonstration.
pub fn weight_nonpara(qd: &[f64], qpi: &[f64], mode: NonparaMode, rng: &mut Rng) -> Result<f64> {
    if qd.is_empty() || qpi.is_empty() {
        return Err(Error::InvalidArgument("nonparametric weight needs at least one sample".into()));
    }
    match mode {
        NonparaMode::Pairwise => {
            if qd.len() != qpi.len() {
                return Err(Error::DimMismatch {
                    what: "pairwise sample sets",
                    expected: qd.len(),
                    got: qpi.len(),
                });
            }
            let mut perm: Vec<usize> = (0..qpi.len()).collect();
            perm.shuffle(rng);
            let wins = qd.iter().zip(&perm).filter(|(d, &j)| **d > qpi[j]).count();
            Ok(wins as f64 / qd.len() as f64)
        }
        NonparaMode::Cross => {
            let wins: usize = qd.iter().map(|d| qpi.iter().filter(|p| d > p).count()).sum();
            Ok(wins as f64 / (qd.len() * qpi.len()) as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightMode {
    #[serde(rename = "qfilter-single")]
    QfilterSingle,
    #[serde(rename = "qfilter-ensemble-mean")]
    QfilterEnsembleMean,
    #[serde(rename = "spred-p")]
    SpredP,
    #[serde(rename = "spred-e")]
    SpredE,
    #[serde(rename = "nonpara-pairwise")]
    NonparaPairwise,
    #[serde(rename = "nonpara-cross")]
    NonparaCross,
}

impl WeightMode {
    pub const ALL: [WeightMode; 6] = [
        WeightMode::QfilterSingle,
        WeightMode::QfilterEnsembleMean,
        WeightMode::SpredP,
        WeightMode::SpredE,
        WeightMode::NonparaPairwise,
        WeightMode::NonparaCross,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::QfilterSingle => "qfilter-single",
            WeightMode::QfilterEnsembleMean => "qfilter-ensemble-mean",
            WeightMode::SpredP => "spred-p",
            WeightMode::SpredE => "spred-e",
            WeightMode::NonparaPairwise => "nonpara-pairwise",
            WeightMode::NonparaCross => "nonpara-cross",
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown weight mode '{s}'")))
    }
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub mode: WeightMode,
    pub alpha: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            mode: WeightMode::SpredP,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)))
        }
    }

    /// Weight for one demo pair under this configuration. Only the
    /// pairwise mode draws from `rng`.
    pub fn weight(&self, qd: &[f64], qpi: &[f64], rng: &mut Rng) -> Result<f64> {
        Ok(match self.mode {
            WeightMode::NonparaPairwise => weight_nonpara(qd, qpi, NonparaMode::Pairwise, rng)?,
            WeightMode::NonparaCross => weight_nonpara(qd, qpi, NonparaMode::Cross, rng)?,
            mode => {
                let sd = ensemble_stats(qd)?;
                let sp = ensemble_stats(qpi)?;
                match mode {
                    WeightMode::QfilterSingle => weight_qfilter(&sd, &sp, false),
                    WeightMode::QfilterEnsembleMean => weight_qfilter(&sd, &sp, true),
                    WeightMode::SpredP => weight_spred_p(&sd, &sp),
                    WeightMode::SpredE => weight_spred_e(&sd, &sp, self.alpha),
                    _ => unreachable!(),
                }
            }
        })
    }
}
