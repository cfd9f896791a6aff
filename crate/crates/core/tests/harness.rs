mod common;

use std::path::Path;

use spred::env::{self, DemoQuality, EnvSpec};
use spred::harness::{self, RunConfig};
use spred::weighting::WeightMode;
use spred::Error;

use common::desk_run;

fn demos(dir: &Path, spec: &EnvSpec, quality: DemoQuality) -> std::path::PathBuf {
    let path = dir.join(format!("{}-{quality:?}.jsonl", spec.name));
    env::generate_demos(spec, quality, 5, 7).unwrap().save(&path).unwrap();
    path
}

fn short(mode: Option<WeightMode>, demo: Option<&Path>, out: &Path) -> RunConfig {
    let mut cfg = desk_run(mode, demo, 3, 3_000, out.to_path_buf());
    cfg.eval_every = 1_000;
    cfg.checkpoint_every = 2_000;
    cfg.eval_episodes = 5;
    cfg
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = demos(dir.path(), &EnvSpec::point_reach_2d(), DemoQuality::Suboptimal);
    let a = harness::run_training(&short(Some(WeightMode::SpredE), Some(&d), &dir.path().join("a"))).unwrap();
    let b = harness::run_training(&short(Some(WeightMode::SpredE), Some(&d), &dir.path().join("b"))).unwrap();
    for f in ["metrics.csv", "weights.jsonl", "final.json", "checkpoints/step_2000.json"] {
        let x = std::fs::read(a.out_dir.join(f)).unwrap();
        let y = std::fs::read(b.out_dir.join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
}

#[test]
fn metrics_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = demos(dir.path(), &EnvSpec::point_reach_2d(), DemoQuality::Expert);
    let art = harness::run_training(&short(Some(WeightMode::SpredP), Some(&d), &dir.path().join("r"))).unwrap();
    let text = std::fs::read_to_string(art.out_dir.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), harness::METRICS_HEADER);
    let rows = harness::read_metrics(&art.out_dir.join("metrics.csv")).unwrap();
    assert_eq!(rows, art.rows);
    assert_eq!(rows.iter().map(|r| r.step / 1000).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert!(rows.windows(2).all(|w| w[0].step < w[1].step && w[0].train_iterations <= w[1].train_iterations));
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.success_rate)));
    // Training starts after warmup (1280 steps), so only later rows carry losses.
    assert!(rows[0].critic_loss.is_none() && rows[3].critic_loss.is_some());
    assert!(rows.iter().all(|r| r.weight_quartiles.is_some()));
    assert_eq!(art.weight_log.len(), rows.len());
    assert!(art.out_dir.join("checkpoints/step_2000.json").exists());
    assert!(!art.out_dir.join("checkpoints/step_1000.json").exists());
    let timing = std::fs::read_to_string(art.out_dir.join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), rows.len() + 1);
}

#[test]
fn run_shorter_than_warmup() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(None, None, &dir.path().join("r"));
    cfg.total_env_steps = 1_000;
    cfg.eval_every = 5_000;
    cfg.checkpoint_every = 5_000;
    let art = harness::run_training(&cfg).unwrap();
    assert_eq!(art.rows.len(), 1);
    assert_eq!(art.train_iterations, 0);
    assert_eq!(art.rows[0].step, 0);
    assert!(art.weight_log.is_empty());
}

#[test]
fn eval_reproduces_logged_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(None, None, &dir.path().join("r"));
    let art = harness::run_training(&cfg).unwrap();
    let logged = art.rows.iter().find(|r| r.step >= 2_000).unwrap().success_rate;
    let rate = harness::run_eval(&art.out_dir.join("checkpoints/step_2000.json"), Some(cfg.eval_episodes), None, dir.path()).unwrap();
    assert_eq!(rate, logged);
    let csv = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.starts_with("checkpoint,total_env_steps,episodes,seed,success_rate\n"));
}

#[test]
fn push_demos_rejected_on_reach() {
    let dir = tempfile::tempdir().unwrap();
    let d = demos(dir.path(), &EnvSpec::point_push_2d(), DemoQuality::Expert);
    let err = harness::run_training(&short(Some(WeightMode::SpredP), Some(&d), &dir.path().join("r"))).unwrap_err();
    assert!(matches!(err, Error::DimMismatch { .. }), "{err}");
}

#[test]
fn config_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(Some(WeightMode::NonparaCross), Some(Path::new("demos.jsonl")), &dir.path().join("r"));
    let path = dir.path().join("cfg.json");
    cfg.save(&path).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);

    let mut bad = cfg.clone();
    bad.demo_file = None;
    assert!(bad.validate().is_err());
    let mut bad = cfg.clone();
    bad.checkpoint_every = 1_500;
    assert!(bad.validate().is_err());

    std::fs::write(&path, r#"{"seed": 1, "bogus": true}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
    std::fs::write(&path, r#"{"seed": 9, "demo_file": "d.jsonl"}"#).unwrap();
    let partial = RunConfig::load(&path).unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.total_env_steps, RunConfig::default().total_env_steps);
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reach-spred-p.json");
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.agent.weighting.mode, WeightMode::SpredP);
}
