use std::process::{Command, Output};

fn spred(args: &[&str], cwd: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spred")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn bad_input_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["train", "--bogus"], &["analyze", "nope"], &[]] {
        let out = spred(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
}

#[test]
fn demo_train_eval_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = spred(&["gen-demos", "--quality", "expert", "--episodes", "3", "--seed", "4", "--out", "demos/d.jsonl"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(p.join("demos/d.jsonl").exists());

    let cfg = r#"{
        "demo_file": "demos/d.jsonl",
        "total_env_steps": 2000,
        "eval_every": 1000,
        "eval_episodes": 3,
        "checkpoint_every": 1000,
        "agent": {"hidden_width": 16, "replay_batch": 32, "demo_batch": 16, "warmup_steps": 500,
                  "updates_per_episode": 2, "ensemble_size": 3}
    }"#;
    std::fs::write(p.join("cfg.json"), cfg).unwrap();
    let out = spred(&["train", "--config", "cfg.json", "--out", "run", "--seed", "2"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.csv", "weights.jsonl", "final.json", "config.resolved.json", "checkpoints/step_1000.json"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }

    let out = spred(&["eval", "--checkpoint", "run/final.json", "--episodes", "3"], p);
    assert!(out.status.success());
    let rate: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert!(p.join("run/eval.csv").exists());

    let out = spred(&["analyze", "variance-gap", "--checkpoint", "run/final.json", "--demos", "demos/d.jsonl", "--resamples", "10", "--out", "a"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(p.join("a/variance_gap.csv").exists());
    let out = spred(&["analyze", "weights", "--log", "run/weights.jsonl", "--out", "a"], p);
    assert!(out.status.success());
    assert!(p.join("a/weights.svg").exists());
    let out = spred(&["analyze", "compare", "--run", "run", "--out", "a"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(p.join("a/compare.csv")).unwrap().contains("spred-p"));
}

#[test]
fn theory_commands_pass() {
    let dir = tempfile::tempdir().unwrap();
    for which in ["limits", "decay", "taylor"] {
        let out = spred(&["analyze", which, "--out", "."], dir.path());
        assert!(out.status.success(), "{which}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(dir.path().join(format!("{which}.csv")).exists());
    }
}

#[test]
fn missing_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = spred(&["eval", "--checkpoint", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = spred(&["verify"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
}
