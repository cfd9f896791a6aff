use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spred::analysis::{self, RunRecord, VarianceGapOptions};
use spred::env::{self, DemoQuality, EnvName, EnvSpec};
use spred::harness::{self, RunConfig};
use spred::{rng, verify, weighting, Error, Result};

#[derive(Parser)]
#[command(name = "spred", version, about = "Uncertainty-weighted behaviour cloning on toy goal-conditioned tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the scripted demonstrator and write a demo file.
    GenDemos {
        #[arg(long, default_value = "point-reach-2d")]
        env: EnvName,
        /// expert | suboptimal | severe | mixed-1pct
        #[arg(long, default_value = "suboptimal")]
        quality: DemoQuality,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (JSON Lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one agent from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 25)]
        episodes: usize,
        /// Defaults to the evaluation seed stored in the checkpoint.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for eval.csv (default: the checkpoint's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Theory checks and run post-processing.
    Analyze {
        #[command(subcommand)]
        which: Analyze,
    },
    /// Run the invariant suite; exit 0 only if every check passes.
    Verify,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Analyze {
    /// Per-mode variance of the BC-gradient estimator at a checkpoint.
    VarianceGap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long, default_value_t = 200)]
        resamples: usize,
        /// Demo batch size (default: the checkpoint's demo_batch).
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Weights over an advantage × spread-scale grid, with limit assertions.
    Limits {
        #[arg(long, default_value_t = weighting::DEFAULT_ALPHA)]
        alpha: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Weights along a synthetic sequence converging to a worse demo.
    Decay {
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = weighting::DEFAULT_ALPHA)]
        alpha: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// First-order agreement of the two smooth weights near A = 0.
    Taylor {
        #[command(flatten)]
        out: OutDir,
    },
    /// Histogram and bucket fractions of a run's weight log, plus an SVG.
    Weights {
        /// weights.jsonl written by `train`.
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Final and AUC success per weighting mode across seeds.
    Compare {
        /// Run directories (each with config.resolved.json and metrics.csv).
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenDemos {
            env: name,
            quality,
            episodes,
            seed,
            out,
        } => {
            let spec = EnvSpec::from_name(name);
            let demos = env::generate_demos(&spec, quality, episodes, seed)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            demos.save(&out)?;
            println!(
                "wrote {} episodes ({} transitions) to {}; demonstrator success {:.3}",
                episodes,
                demos.num_transitions(),
                out.display(),
                demos.header.success_rate
            );
        }
        Command::Train { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let art = harness::run_training(&cfg)?;
            println!(
                "{} env steps, {} training iterations, final success {:.3}; artifacts in {}",
                art.total_env_steps,
                art.train_iterations,
                art.final_success(),
                art.out_dir.display()
            );
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            out,
        } => {
            let dir = out.unwrap_or_else(|| checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
            let rate = harness::run_eval(&checkpoint, Some(episodes), seed, &dir)?;
            println!("{rate}");
        }
        Command::Analyze { which } => return analyze(which),
        Command::Verify => {
            let checks = verify::run_all()?;
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn analyze(which: Analyze) -> Result<bool> {
    match which {
        Analyze::VarianceGap {
            checkpoint,
            demos,
            resamples,
            batch,
            seed,
            out,
        } => {
            let agent = harness::load_checkpoint(&checkpoint)?.into_agent()?;
            let demo_set = harness::load_demos_for(&demos, &agent.spec)?;
            let transitions: Vec<_> = demo_set.transitions().cloned().collect();
            let opts = VarianceGapOptions {
                n_resamples: resamples,
                batch: batch.unwrap_or(agent.config.demo_batch),
                alpha: agent.config.weighting.alpha,
                force_unit_weights: false,
            };
            let mut r = rng::stream(seed, rng::Stream::Weights);
            let report = analysis::variance_gap_experiment(&agent, &transitions, &opts, &mut r)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let path = write(&out.out, "variance_gap.csv", &report.to_csv())?;
            print!("{}", report.to_csv());
            println!("wrote {}", path.display());
        }
        Analyze::Limits { alpha, out } => {
            let table = analysis::limit_behavior_table(&[-1.0, -0.1, 0.0, 0.1, 1.0], &[1e-6, 1e-3, 1.0, 1e3, 1e6], alpha)?;
            let path = write(&out.out, "limits.csv", &table.to_csv())?;
            for (what, ok) in &table.checks {
                println!("{} {what}", if *ok { "PASS" } else { "FAIL" });
            }
            println!("wrote {}", path.display());
            return Ok(table.all_pass());
        }
        Analyze::Decay { steps, delta, alpha, out } => {
            let rows = analysis::suboptimal_decay_sim(steps, delta, alpha)?;
            let path = write(&out.out, "decay.csv", &analysis::decay_csv(&rows))?;
            let last = rows.last().expect("steps >= 2");
            println!("final p_P {:e}, p_E {:e}; wrote {}", last.p_p, last.p_e, path.display());
            if delta > 0.0 {
                return Ok(last.p_p < 1e-3 && last.p_e < 1e-3);
            }
        }
        Analyze::Taylor { out } => {
            let ratios: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.005).collect();
            let rep = analysis::taylor_agreement(&[0.01, 0.1, 1.0, 10.0], &ratios)?;
            let path = write(&out.out, "taylor.csv", &rep.to_csv())?;
            println!(
                "max deviation {:e}, within 0.2(A/σ)² + 1e-12 everywhere: {}; wrote {}",
                rep.max_deviation,
                rep.all_within_bound,
                path.display()
            );
            return Ok(rep.all_within_bound);
        }
        Analyze::Weights { log, out } => {
            let records = analysis::read_weight_log(&log)?;
            let (csv, svg) = analysis::weight_evolution_report(&records)?;
            let a = write(&out.out, "weights_binned.csv", &csv)?;
            let b = write(&out.out, "weights.svg", &svg)?;
            println!("wrote {} and {}", a.display(), b.display());
        }
        Analyze::Compare { runs, out } => {
            let mut records = Vec::new();
            for dir in &runs {
                let cfg = RunConfig::load(&dir.join("config.resolved.json"))?;
                let mode = if cfg.agent.use_demos {
                    cfg.agent.weighting.mode.to_string()
                } else {
                    "no-demos".to_string()
                };
                records.push(RunRecord {
                    mode,
                    seed: cfg.seed,
                    rows: harness::read_metrics(&dir.join("metrics.csv"))?,
                });
            }
            let rows = analysis::gaussian_vs_nonpara_compare(&records)?;
            let csv = analysis::compare_csv(&rows);
            let path = write(&out.out, "compare.csv", &csv)?;
            print!("{csv}");
            println!("wrote {}", path.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
