//! End-to-end runs of the `cogaction` binary: outputs, exit statuses, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cogaction"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(config: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(config).args(extra).output().unwrap()
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

const SWEEP: &str = r#"{
  "output_dir": "out",
  "seed": 2,
  "plot": true,
  "experiment": {
    "kind": "sweep-eps",
    "grid": 200,
    "epsilons": [0.2, 0.1, 0.05, 0.025],
    "action": {
      "family": "W-eps",
      "potential": {"kind": "quadratic", "dim": 1, "stiffness": [1.0]},
      "q0": [1.0], "q1": [0.0], "horizon": 3.0
    }
  }
}"#;

#[test]
fn sweep_writes_four_rows_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", SWEEP);
    let out = run(&cfg, &[]);
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("out/result.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "param,h1_dist,l2_dist,sup_dist,converged,iterations"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.contains(",true,")));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["experiment"], "sweep-eps");
    let rows = report["sweep"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["report"]["wall_time"].is_null()));

    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("status: ok"));
    assert!(summary.contains("h1 strictly decreasing: true"));
    assert!(dir.path().join("out/plot.svg").exists());
}

#[test]
fn theorem_mode_without_confinement_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "kappa.json",
        r#"{"output_dir": "out", "experiment": {"kind": "minimize", "grid": 50,
            "action": {"family": "Gamma", "theorem_mode": true,
              "coefficients": {"alpha": 1, "beta": 1, "kappa": 0},
              "weight": {"kind": "constant-one"},
              "potential": {"kind": "quadratic", "dim": 1, "stiffness": [1.0]},
              "q0": [1], "q1": [0], "horizon": 1}}}"#,
    );
    let out = run(&cfg, &[]);
    assert_eq!(status(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
    assert!(!dir.path().join("out/result.csv").exists());
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ds.json",
        r#"{"output_dir": "out", "experiment": {"kind": "gradcheck",
            "potential": {"kind": "logistic-loss", "dataset": "missing.csv"}}}"#,
    );
    assert_eq!(status(&run(&cfg, &[])), 2);
    assert_eq!(
        status(&bin().arg("validate").arg(&cfg).output().unwrap()),
        2
    );
}

#[test]
fn unknown_field_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        "{\"output_dir\": \"out\",\n \"experiment\": {\"kind\": \"gradcheck\",\n  \"potential\": {\"kind\": \"quadratic\", \"dim\": 1, \"stiffness\": [1.0]},\n  \"tolerance\": 3}}",
    );
    let out = run(&cfg, &[]);
    assert_eq!(status(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tolerance") && err.contains("line 4"), "{err}");
}

#[test]
fn non_convergence_writes_marked_outputs_and_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "slow.json",
        r#"{"output_dir": "out", "experiment": {"kind": "minimize", "grid": 100,
            "solver": {"max_iterations": 1},
            "action": {"family": "W-eps", "epsilon": 0.1,
              "potential": {"kind": "double-well", "dim": 1},
              "q0": [0.5], "q1": [0.0], "horizon": 2}}}"#,
    );
    let out = run(&cfg, &[]);
    assert_eq!(status(&out), 4);
    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("status: FAILED"), "{summary}");
    let report = fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert!(report.contains("\"converged\": false"));
}

#[test]
fn diverging_integration_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "blowup.json",
        r#"{"output_dir": "out", "experiment": {"kind": "integrate", "dynamics": {
            "kind": "newton", "mass": 1,
            "potential": {"kind": "double-well", "dim": 1},
            "q0": [1000], "q1": [0], "horizon": 1, "dt": 0.01}}}"#,
    );
    assert_eq!(status(&run(&cfg, &[])), 4);
    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("status: FAILED"));
    assert!(!dir.path().join("out/result.csv").exists());
}

#[test]
fn unwritable_output_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "file").unwrap();
    let cfg = write_config(
        dir.path(),
        "io.json",
        &SWEEP.replace("\"out\"", "\"blocker/out\""),
    );
    assert_eq!(status(&run(&cfg, &[])), 5);
}

#[test]
fn outputs_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"output_dir": "OUT", "seed": 13, "experiment": {"kind": "minimize", "grid": 80, "starts": 5,
        "action": {"family": "Gamma",
          "coefficients": {"alpha": 1, "beta": 1, "kappa": 0.5},
          "weight": {"kind": "exp-decay", "epsilon": 0.5},
          "potential": {"kind": "double-well", "dim": 2},
          "q0": [0.5, -0.2], "q1": [0, 0], "horizon": 2}}}"#;
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3"), ("c", "1")] {
        let cfg = write_config(
            dir.path(),
            &format!("{name}.json"),
            &body.replace("OUT", name),
        );
        let out = bin()
            .arg("run")
            .arg(&cfg)
            .env("COGACTION_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let read = |f: &str| fs::read(dir.path().join(name).join(f)).unwrap();
        outputs.push((read("result.csv"), read("report.json")));
    }
    assert!(outputs.iter().all(|o| *o == outputs[0]));
}

#[test]
fn replay_table_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("data")).unwrap();
    fs::write(dir.path().join("data/u.csv"), "u0\n0.0\n1.0\n0.5\n-0.5\n").unwrap();
    let cfg = write_config(
        &dir.path().join("data"),
        "online.json",
        r#"{"output_dir": "../out", "experiment": {"kind": "integrate", "dynamics": {
            "kind": "online-gradient-flow", "dissipation": 1,
            "potential": {"kind": "tracking", "dim": 1, "stiffness": 2.0},
            "signal": {"kind": "replay", "table": "u.csv", "hold": 0.5},
            "q0": [0], "horizon": 2, "dt": 0.01}}}"#,
    );
    let out = bin()
        .current_dir("/")
        .arg("run")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/result.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn validate_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", SWEEP);
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(status(&out), 0);
    assert!(!dir.path().join("out").exists());
    let out = bin().arg("version").output().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("cogaction "));
}
