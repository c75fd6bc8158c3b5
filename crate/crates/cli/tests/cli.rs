//! End-to-end runs of the `coppkit` binary: exit codes, determinism and
//! output formats.

use std::path::Path;
use std::process::{Command, Output};

fn coppkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coppkit"))
        .args(args)
        .env_remove("COPPKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_RUN: &str = r#"{
    "env": {"kind": "toy_discrete"},
    "eps_star": [0.3, 0.1],
    "alpha": 0.1, "m": 200, "n": 200, "n_test": 50,
    "methods": ["copp_gt", "copp_est", "standard_cp", "union_cp", "wis", "sba", "oracle"],
    "seeds": [1, 2],
    "ell": 100,
    "train": {"epochs": 5, "batch_size": 64}
}"#;

#[test]
fn generate_writes_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = coppkit(&["generate", "--env", "toy-discrete", "--n", "600", "--seed", "1", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("600 rows"));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 601);
    assert!(text.starts_with("x0,a,y\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn generate_rejects_out_of_family_eps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = coppkit(&["generate", "--env", "toy-discrete", "--eps-b", "0.4", "--n", "10", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("1/3"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn generate_unwritable_path_is_exit_2() {
    let o = coppkit(&["generate", "--env", "toy-continuous", "--n", "5", "--out", "/nonexistent-dir/x/d.csv"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent-dir/x/d.csv"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(code(&coppkit(&["generate", "--env", "moon", "--n", "5", "--out", "x"])), 2);
    assert_eq!(code(&coppkit(&["frobnicate"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_coppkit"))
        .args(["generate", "--env", "toy-discrete", "--n", "5", "--out", "/dev/null"])
        .env("COPPKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("COPPKIT_THREADS"));
}

#[test]
fn run_writes_reports_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let mut outputs = Vec::new();
    for name in ["one.json", "two.json"] {
        let out = dir.path().join(name);
        let o = coppkit(&["--threads", "1", "run", "--config", p(&cfg), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let json = std::fs::read_to_string(&out).unwrap();
        let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
        outputs.push((json, csv));
    }
    assert_eq!(outputs[0], outputs[1]);
    let report: serde_json::Value = serde_json::from_str(&outputs[0].0).unwrap();
    let summary = report["summary"].as_array().unwrap();
    assert_eq!(summary.len(), 7 * 2);
    // header plus methods × targets × seeds
    assert_eq!(outputs[0].1.lines().count(), 1 + 7 * 2 * 2);
    assert!(outputs[0].1.starts_with("method,eps_star,seed,coverage,length\n"));
}

#[test]
fn run_schema_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let cases = [
        (SMALL_RUN.replace("[1, 2]", "[]"), "seeds"),
        (SMALL_RUN.replace("\"ell\"", "\"elll\""), "elll"),
        (SMALL_RUN.replace("\"epochs\": 5", "\"epochs\": \"five\""), "train.epochs"),
    ];
    for (text, key) in cases {
        let cfg = dir.path().join("bad.json");
        std::fs::write(&cfg, text).unwrap();
        let o = coppkit(&["run", "--config", p(&cfg), "--out", p(&out)]);
        assert_eq!(code(&o), 2, "{}", stderr(&o));
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
    }
    assert!(!out.exists());
}

#[test]
fn run_with_failed_cells_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // a learning rate this large makes every fit diverge
    std::fs::write(&cfg, SMALL_RUN.replace("\"epochs\": 5", "\"epochs\": 5, \"learning_rate\": 1e300")).unwrap();
    let out = dir.path().join("r.json");
    let o = coppkit(&["run", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(!report["failures"].as_array().unwrap().is_empty());
}

fn train_toy(dir: &Path, env: &str, actions: &str, n: &str, m: &str) -> std::path::PathBuf {
    let data = dir.join("data.csv");
    let o = coppkit(&["generate", "--env", env, "--n", n, "--seed", "3", "--out", p(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let models = dir.join("models");
    let o = coppkit(&[
        "train", "--data", p(&data), "--actions", actions, "--m", m, "--epochs", "5", "--seed", "4",
        "--model-dir", p(&models),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    models
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn train_then_predict_continuous_actions() {
    let dir = tempfile::tempdir().unwrap();
    let models = train_toy(dir.path(), "toy-continuous", "continuous", "300", "200");
    for f in ["manifest.json", "behavior.json", "quantiles.json", "outcome.json", "calibration.csv"] {
        assert!(models.join(f).exists(), "{f}");
    }
    let test = dir.path().join("test.csv");
    std::fs::write(&test, "x0\n0.0\n1.5\n-2.25\n").unwrap();
    let policy = r#"{"kind": "gaussian_linear", "coef": 0.25, "shift": 1.0, "std": 1.0}"#;
    let mut outs = Vec::new();
    for name in ["s1.csv", "s2.csv"] {
        let out = dir.path().join(name);
        let o = coppkit(&[
            "predict", "--model-dir", p(&models), "--data", p(&test), "--target-policy", policy, "--h", "50",
            "--out", p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outs.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    let rows = read_rows(&dir.path().join("s1.csv"));
    assert_eq!(rows[0], ["row", "lo", "hi", "length", "unbounded"]);
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        let (lo, hi): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!(lo <= hi, "{r:?}");
        assert!(r[3].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn tiny_calibration_and_small_alpha_flag_unbounded_sets() {
    let dir = tempfile::tempdir().unwrap();
    let models = train_toy(dir.path(), "toy-discrete", "4", "205", "200");
    let test = dir.path().join("test.csv");
    std::fs::write(&test, "x0,a,y\n0.5,1,0.2\n-1.5,0,3.0\n").unwrap();
    let out = dir.path().join("sets.csv");
    let policy = r#"{"kind": "tabular_rule", "thresholds": [], "table": [[0.25, 0.25, 0.25, 0.25]]}"#;
    let o = coppkit(&[
        "predict", "--model-dir", p(&models), "--data", p(&test), "--target-policy", policy, "--alpha", "0.001",
        "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("unbounded"));
    let rows = read_rows(&out);
    assert!(rows[1..].iter().all(|r| r[4] == "true"), "{rows:?}");
}

#[test]
fn predict_rejects_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let models = train_toy(dir.path(), "toy-discrete", "4", "120", "100");
    let out = dir.path().join("sets.csv");
    let good_policy = r#"{"kind": "tabular_rule", "thresholds": [], "table": [[0.25, 0.25, 0.25, 0.25]]}"#;
    let wide = dir.path().join("wide.csv");
    std::fs::write(&wide, "x0,x1\n0.1,0.2\n").unwrap();
    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, "x0\n0.1\n").unwrap();
    let cases = [
        (p(&wide), good_policy),
        (p(&narrow), r#"{"kind": "tabular_rule", "thresholds": [], "table": [[0.5, 0.5]]}"#),
        (p(&narrow), r#"{"kind": "gaussian_linear", "coef": 0.25, "shift": 0.0, "std": 1.0}"#),
        (p(&narrow), r#"{"kind": "tabular_rule", "thresholds": [], "table": [[0.9, 0.9, 0.1, 0.1]]}"#),
    ];
    for (data, policy) in cases {
        let o = coppkit(&[
            "predict", "--model-dir", p(&models), "--data", data, "--target-policy", policy, "--out", p(&out),
        ]);
        assert_eq!(code(&o), 2, "{policy}: {}", stderr(&o));
    }
    let o = coppkit(&[
        "predict", "--model-dir", p(&dir.path().join("nope")), "--data", p(&narrow), "--target-policy", good_policy,
        "--out", p(&out),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn discrete_outcomes_give_semicolon_label_lists() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("labels.csv");
    let mut text = String::from("x0,a,y\n");
    for i in 0..400u32 {
        let x = f64::from(i % 97) / 24.0 - 2.0;
        let a = i % 2;
        let noise = (f64::from(i) * 0.7).sin();
        let y = u32::from(x + 0.8 * f64::from(a) + noise > 0.0);
        text += &format!("{x},{a},{y}\n");
    }
    std::fs::write(&data, text).unwrap();
    let models = dir.path().join("models");
    let o = coppkit(&[
        "train", "--data", p(&data), "--actions", "2", "--labels", "2", "--epochs", "5", "--model-dir", p(&models),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(models.join("labels.json").exists());
    let test = dir.path().join("test.csv");
    std::fs::write(&test, "x0\n-1.0\n0.0\n1.9\n").unwrap();
    let out = dir.path().join("sets.csv");
    let policy = r#"{"kind": "tabular_rule", "thresholds": [], "table": [[0.2, 0.8]]}"#;
    for alpha in ["0.3", "0.01"] {
        let o = coppkit(&[
            "predict", "--model-dir", p(&models), "--data", p(&test), "--target-policy", policy, "--alpha", alpha,
            "--out", p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let rows = read_rows(&out);
        assert_eq!(rows[0], ["row", "labels", "unbounded"]);
        for r in &rows[1..] {
            assert!(r[1].split(';').filter(|s| !s.is_empty()).all(|l| l == "0" || l == "1"), "{r:?}");
        }
        if alpha == "0.01" {
            assert!(rows[1..].iter().all(|r| r[1] == "0;1"), "{rows:?}");
        }
    }
}

#[test]
fn train_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, "x0,a,y\n0.1,7,1.0\n0.2,0,1.0\n").unwrap();
    let models = dir.path().join("m");
    // action 7 outside a 4-action space
    let o = coppkit(&["train", "--data", p(&data), "--actions", "4", "--model-dir", p(&models)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let o = coppkit(&["train", "--data", p(&data), "--actions", "continuous", "--labels", "2", "--model-dir", p(&models)]);
    assert_eq!(code(&o), 2);
    let o = coppkit(&["train", "--data", p(&data), "--actions", "zero", "--model-dir", p(&models)]);
    assert_eq!(code(&o), 2);
}
