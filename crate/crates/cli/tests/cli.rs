use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mantra(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mantra"));
    cmd.args(args).env_remove("MANTRA_OUT");
    if let Some(dir) = out_env {
        cmd.env("MANTRA_OUT", dir);
    }
    cmd.output().expect("spawn mantra")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_artifacts_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mantra(
        &[
            "run",
            "--task",
            "cls",
            "--noise-rate",
            "0.1",
            "--seed",
            "2",
            "--mantra",
            "on",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("cls rate=0.1 seed=2 mantra=on micro_f1="));
    for f in [
        "results.json",
        "noise_mask.csv",
        "trajectory.csv",
        "drops.csv",
        "gmm_trace.csv",
        "model.ckpt.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn environment_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let flag = dir.path().join("flag");
    let env = dir.path().join("env");
    let o = mantra(
        &[
            "run",
            "--task",
            "cls",
            "--epochs",
            "7",
            "--out",
            flag.to_str().unwrap(),
        ],
        Some(&env),
    );
    assert!(o.status.success());
    assert!(env.join("results.json").exists());
    assert!(!flag.exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let bad_tau = mantra(&["run", "--task", "cls", "--tau", "0.2"], None);
    assert_eq!(bad_tau.status.code(), Some(2));
    let bad_warmup = mantra(&["run", "--task", "sum", "--epochs", "3"], None);
    assert_eq!(bad_warmup.status.code(), Some(2));
    let bad_task = mantra(&["run", "--task", "docs"], None);
    assert_eq!(bad_task.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_run_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let o = mantra(
        &["run", "--task", "cls", "--data", missing.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.jsonl"));
}

#[test]
fn runs_on_a_jsonl_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("c.jsonl");
    let mut body = String::new();
    for i in 0..60 {
        let split = match i % 6 {
            0 => "val",
            1 => "test",
            _ => "train",
        };
        let label = if i % 2 == 0 { "Bug" } else { "Feature" };
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        body.push_str(&format!(
            "{{\"features\":[{},{}],\"labels\":[\"{label}\"],\"split\":\"{split}\"}}\n",
            sign * (1.0 + i as f64 / 60.0),
            (i % 5) as f64 / 5.0
        ));
    }
    fs::write(&data, body).unwrap();
    let out = dir.path().join("out");
    let o = mantra(
        &[
            "run",
            "--task",
            "cls",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let noise = fs::read_to_string(out.join("noise_mask.csv")).unwrap();
    assert_eq!(noise.lines().count(), 41);
}

#[test]
fn grid_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("grid");
    let o = mantra(
        &[
            "grid",
            "--task",
            "cls",
            "--rates",
            "0,0.15",
            "--seeds",
            "3",
            "--out",
            root.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 5);
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    let cell = |name: &str| root.join(name).join("results.json");
    let o = mantra(
        &[
            "compare",
            cell("cls_r0.15_s3_baseline").to_str().unwrap(),
            cell("cls_r0.15_s3_mantra").to_str().unwrap(),
            "--clean",
            cell("cls_r0_s3_baseline").to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let delta = v["delta"].as_f64().unwrap();
    let (b, m) = (
        v["baseline_metric"].as_f64().unwrap(),
        v["mantra_metric"].as_f64().unwrap(),
    );
    assert!((delta - (m - b)).abs() < 1e-12);
    assert!(v["baseline_degradation"].as_f64().is_some());

    let mismatched = mantra(
        &[
            "compare",
            cell("cls_r0.15_s3_baseline").to_str().unwrap(),
            cell("cls_r0_s3_mantra").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(mismatched.status.code(), Some(2));
}
