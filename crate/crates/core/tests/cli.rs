use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_chanprune");

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/demo.toml")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CHANPRUNE_OUT").output().unwrap()
}

fn stage(name: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = demo_config();
    let mut args = vec![name, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(extra);
    run(&args)
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn stages_run_in_order_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    for (name, extra) in [
        ("train-teacher", vec![]),
        ("calibrate", vec!["--metric", "agf", "--T", "8"]),
        ("prune", vec![]),
        ("finetune", vec![]),
        ("route", vec!["--tau", "0.9"]),
        ("sweep", vec![]),
        ("analyze", vec![]),
    ] {
        let o = stage(name, &a, &extra);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "teacher.ckpt", "teacher_history.csv", "scores_agf.csv", "prune_spec.json", "pruned.ckpt",
        "finetuned.ckpt", "finetune_history.csv", "trace.csv", "sweep.csv", "pareto_cascade.csv",
        "pareto_exclusive.csv", "stability.csv", "orthogonality.csv", "proxy_fidelity.csv",
        "entropy.csv", "summary.json",
    ] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let taus: Vec<&str> = sweep.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(taus, ["0.0", "0.5", "0.7", "0.8", "0.9", "0.95", "0.98", "0.99", "0.999"]);

    let b = dir.path().join("b");
    let o = stage("run-all", &b, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = stage("calibrate", dir.path(), &["--metric", "magic"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("agf") && err.contains("wanda") && err.contains("random"), "{err}");
    assert_eq!(stage("prune", dir.path(), &["--k", "0"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_3_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(demo_config()).unwrap().replace("ramp_steps = 1\n", "");
    let cfg = dir.path().join("broken.toml");
    fs::write(&cfg, text).unwrap();
    let o = run(&["train-teacher", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ramp_steps"));
    // k beyond the target width is a config error, not a usage error
    assert_eq!(stage("prune", dir.path(), &["--k", "65"]).status.code(), Some(3));
}

#[test]
fn missing_upstream_exits_4_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = stage("finetune", dir.path(), &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pruned.ckpt"));
}

#[test]
fn data_free_metric_warns_about_batches() {
    let dir = tempfile::tempdir().unwrap();
    assert!(stage("train-teacher", dir.path(), &[]).status.success());
    let o = stage("calibrate", dir.path(), &["--metric", "l1", "--T", "8"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("ignored"));
    assert!(dir.path().join("scores_l1.csv").is_file());
}

#[test]
fn environment_sets_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["train-teacher", "--config", demo_config().to_str().unwrap()])
        .env("CHANPRUNE_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("teacher.ckpt").is_file());
}

#[test]
fn cancellation_demo_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["demo-cancellation", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));
    assert!(dir.path().join("cancellation_scores.csv").is_file());
}
