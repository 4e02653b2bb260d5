use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_indefinite"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["train"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["sweep"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--data", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    write(dir.path(), "bad.json", r#"{"epochs": "many"}"#);
    let out = run(dir.path(), &["grad-check", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(0), "unknown keys are ignored");
    let out = run(
        dir.path(),
        &["train", "--data", "missing.json", "--config", "bad.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}

#[test]
fn grad_check_passes_and_fails_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["grad-check", "--out", "g.json"]);
    assert_eq!(out.status.code(), Some(0));
    let cells: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(cells.as_array().unwrap().len(), 8);
    write(dir.path(), "strict.json", r#"{"tolerance": 0.0}"#);
    assert_eq!(
        run(dir.path(), &["grad-check", "--config", "strict.json"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn pipeline_is_reproducible_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "spec.json", r#"{"n_samples": 60, "dim": 4, "seed": 1}"#);
    write(d, "train.json", r#"{"epochs": 2, "hidden": 6, "seed": 1}"#);
    for tag in ["a", "b"] {
        let data = format!("data_{tag}.json");
        let report = format!("report_{tag}.json");
        let eval = format!("eval_{tag}.json");
        assert!(run(
            d,
            &[
                "gen-data",
                "--spec",
                "spec.json",
                "--seed",
                "9",
                "--out",
                &data
            ]
        )
        .status
        .success());
        assert!(run(
            d,
            &[
                "train",
                "--data",
                &data,
                "--config",
                "train.json",
                "--seed",
                "4",
                "--out",
                &report
            ]
        )
        .status
        .success());
        assert!(run(
            d,
            &["eval", "--data", &data, "--params", &report, "--out", &eval]
        )
        .status
        .success());
    }
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("data_a.json"), read("data_b.json"));
    assert_eq!(read("report_a.csv"), read("report_b.csv"));
    assert_eq!(read("eval_a.csv"), read("eval_b.csv"));

    let data: serde_json::Value = serde_json::from_slice(&read("data_a.json")).unwrap();
    assert_eq!(data["spec"]["seed"], 9);
    assert_eq!(data["spec"]["n_samples"], 60);
    let report: serde_json::Value = serde_json::from_slice(&read("report_a.json")).unwrap();
    assert_eq!(report["config"]["seed"], 4);
    assert_eq!(report["config"]["epochs"], 2);
}

#[test]
fn sweep_writes_restartable_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "sweep.json",
        r#"{
            "dataset": {"spec": {"n_samples": 40, "dim": 3}},
            "train": {"epochs": 1, "hidden": 4},
            "axis": "intervention_arity",
            "values": [1, 2],
            "seeds": [0, 1],
            "out_dir": "ignored"
        }"#,
    );
    let out = run(
        d,
        &[
            "sweep",
            "--config",
            "sweep.json",
            "--out",
            "grid",
            "--workers",
            "2",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!d.join("ignored").exists());
    let csv = std::fs::read_to_string(d.join("grid/sweep.csv")).unwrap();
    assert!(csv.starts_with("axis,axis_value,seed,metric,value\n"));
    let points = std::fs::read_dir(d.join("grid")).unwrap().filter(|e| {
        e.as_ref()
            .unwrap()
            .file_name()
            .to_string_lossy()
            .starts_with("point_")
    });
    assert_eq!(points.count(), 4);
    assert!(
        run(d, &["sweep", "--config", "sweep.json", "--out", "grid"])
            .status
            .success()
    );
    assert_eq!(
        std::fs::read_to_string(d.join("grid/sweep.csv")).unwrap(),
        csv
    );
}

#[test]
fn verify_abstraction_reports_agreement() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "ccc.json", r#"{"trials": 6, "n_draws": 500}"#);
    let out = run(
        dir.path(),
        &[
            "verify-abstraction",
            "--config",
            "ccc.json",
            "--out",
            "ccc_out.json",
        ],
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ccc_out.json")).unwrap())
            .unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 6);
    assert_eq!(report["fig7_arity1"], "not_distinguishable");
    assert_eq!(report["fig7_arity2"]["arity"], 2);
}

#[test]
fn llm_loop_label_mode_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "llm-loop",
            "--oracle",
            "label",
            "--max-iters",
            "5",
            "--out",
            "trace.json",
        ],
    );
    assert!(out.status.success());
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.json")).unwrap())
            .unwrap();
    assert_eq!(trace["results"].as_array().unwrap().len(), 20);
    assert_eq!(
        trace["mean_f1_trace"].as_array().unwrap().last().unwrap(),
        1.0
    );
}

#[test]
fn llm_loop_http_without_endpoint_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_indefinite"))
        .current_dir(dir.path())
        .env_remove("LLM_ENDPOINT")
        .args(["llm-loop", "--oracle", "http"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
