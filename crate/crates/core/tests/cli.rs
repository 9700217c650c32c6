//! End-to-end checks of the binary: exit codes, JSON output, CSV export,
//! and byte-identical reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ubound")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join(format!("ubound-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn norm_identity_examples() {
    let array = repo_file("data/identity-2x2.json");
    let array = array.to_str().unwrap();

    let out = stdout_json(&run(&["norm", array, "{1}|{2}"]));
    assert!((out["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = stdout_json(&run(&["norm", array, "{1,2}"]));
    let sqrt2 = 2.0_f64.sqrt();
    assert!((out["value"].as_f64().unwrap() - sqrt2).abs() < 1e-12);
}

#[test]
fn norm_rejects_overlapping_blocks() {
    let array = repo_file("data/identity-2x2.json");
    let out = run(&["norm", array.to_str().unwrap(), "{1}|{1}"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("blocks not disjoint"), "stderr: {stderr}");
}

#[test]
fn missing_file_exits_2() {
    let out = run(&["norm", "/nonexistent/a.json", "{1}"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn canonicalize_preserves_form_and_is_stable() {
    let kernel = repo_file("data/rademacher-xy.json");
    let out = stdout_json(&run(&["canonicalize", kernel.to_str().unwrap()]));
    // The xy kernel is already canonical: same table back, shared form.
    assert_eq!(out["d"], 2);
    assert_eq!(out["kernelTable"][0], 1.0);
}

#[test]
fn noncanonical_kernel_exits_3_without_flag() {
    let dir = tmp_dir("noncanon");
    let path = dir.join("shifted.json");
    // x*y + 1 has nonzero conditional means.
    std::fs::write(
        &path,
        r#"{"d": 2, "n": 1,
            "space": {"atoms": ["-1", "+1"], "probs": [0.5, 0.5]},
            "kernelTable": [2.0, 0.0, 0.0, 2.0]}"#,
    )
    .unwrap();
    let path = path.to_str().unwrap();

    let out = run(&["bound", path, "--theorem", "6", "--p", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("conditional mean"), "stderr: {stderr}");

    let out = run(&[
        "bound",
        path,
        "--theorem",
        "6",
        "--p",
        "2",
        "--allow-noncanonical",
    ]);
    assert_eq!(out.status.code(), Some(0));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cor3_at_n1_matches_theorem_7() {
    let dir = tmp_dir("cor3");
    let path = dir.join("xy-n1.json");
    std::fs::write(
        &path,
        r#"{"d": 2, "n": 1,
            "space": {"atoms": ["-1", "+1"], "probs": [0.5, 0.5]},
            "kernelTable": [1.0, -1.0, -1.0, 1.0]}"#,
    )
    .unwrap();
    let path = path.to_str().unwrap();

    let seven = stdout_json(&run(&["bound", path, "--theorem", "7", "--t", "3"]));
    let cor3 = stdout_json(&run(&[
        "bound", path, "--theorem", "cor3", "--n", "1", "--t", "3",
    ]));
    assert_eq!(seven["total"], cor3["total"]);
    assert_eq!(seven["exponent"], cor3["exponent"]);
    assert_eq!(
        seven["terms"].as_array().unwrap().len(),
        cor3["terms"].as_array().unwrap().len()
    );
    for (a, b) in seven["terms"]
        .as_array()
        .unwrap()
        .iter()
        .zip(cor3["terms"].as_array().unwrap())
    {
        assert_eq!(a["normValue"], b["normValue"]);
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn tail_sweep_writes_csv() {
    let kernel = repo_file("data/rademacher-xy.json");
    let dir = tmp_dir("sweep");
    let csv_path = dir.join("regime.csv");
    let out = run(&[
        "bound",
        kernel.to_str().unwrap(),
        "--theorem",
        "7",
        "--t-grid",
        "1,4,16",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("t,exponent,dominantI,dominantJ,bound\n"));
    assert_eq!(csv.lines().count(), 4);
    // Far tail is controlled by the pointwise term.
    assert!(csv.lines().last().unwrap().contains("∅"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn theorem8_threshold_on_unit_kernel() {
    let dir = tmp_dir("t8");
    let path = dir.join("unit.json");
    std::fs::write(
        &path,
        r#"{"d": 1, "grids": [[0.0, 1.0]], "coefficients": [1.0]}"#,
    )
    .unwrap();
    let out = stdout_json(&run(&[
        "bound",
        path.to_str().unwrap(),
        "--theorem",
        "8",
        "--p",
        "2",
    ]));
    let expected = 2.0 + 2.0_f64.sqrt();
    assert!((out["total"].as_f64().unwrap() - expected).abs() < 1e-9);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_rejects_bad_schema_with_exit_2() {
    let dir = tmp_dir("schema");
    let path = dir.join("bad.json");
    std::fs::write(
        &path,
        r#"{"kind": "momentVerification", "schemaVersion": 1,
            "pList": [2.0], "constant": 1.0, "unknownKnob": 3}"#,
    )
    .unwrap();
    let out = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_bundled_config_is_deterministic_across_threads() {
    let config = repo_file("configs/rademacher-d2.json");
    let config = config.to_str().unwrap();
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "8"), ("c", "1")] {
        let dir = tmp_dir(&format!("det-{tag}"));
        let out = run(&[
            "verify",
            config,
            "--out-dir",
            dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0));
        let report =
            std::fs::read_to_string(dir.join("rademacher-d2.report.json"))
                .unwrap();
        let csv =
            std::fs::read_to_string(dir.join("rademacher-d2.csv")).unwrap();
        outputs.push((out.stdout, report, csv));
        std::fs::remove_dir_all(&dir).ok();
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    assert!(!outputs[0].1.is_empty());
}

#[test]
fn poisson_norm_matches_worked_example() {
    let kernel = repo_file("data/unit-square-step.json");
    let out = stdout_json(&run(&[
        "poisson",
        "norm",
        kernel.to_str().unwrap(),
        "{1}|{2}",
    ]));
    assert!((out["values"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
}
