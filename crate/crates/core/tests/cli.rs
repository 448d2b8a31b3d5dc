//! End-to-end runs of the `instmeter` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn instmeter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_instmeter"))
        .args(args)
        .env_remove("INSTMETER_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(instmeter(&["--help"]).status.code(), Some(0));
    assert_eq!(instmeter(&["--version"]).status.code(), Some(0));
    assert_eq!(instmeter(&[]).status.code(), Some(1));
    assert_eq!(instmeter(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        instmeter(&["fit", "--dataset", "x.csv"]).status.code(),
        Some(1)
    );
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = instmeter(&["parse-disasm", "--input", "/nonexistent.dis"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "model_id,cycles,energy_j,latency_s\nm1,notanumber,1e-3,1e-3\n",
    )
    .unwrap();
    let out = instmeter(&["fit", "--dataset", p(&bad), "--target", "energy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib.json");
    let est = dir.path().join("est.json");
    let pred = dir.path().join("pred.json");

    let out = instmeter(&[
        "build-lib",
        "--manifest",
        p(&fixture("manifest.json")),
        "--out",
        p(&lib),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = instmeter(&[
        "estimate",
        "--model",
        p(&fixture("models/tiny_cnn.json")),
        "--lib",
        p(&lib),
        "--out",
        p(&est),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&est).unwrap()).unwrap();
    let total = doc["total_cycles"].as_u64().unwrap();
    assert!(total > 0);
    assert_eq!(doc["operators"].as_array().unwrap().len(), 3);

    let out = instmeter(&[
        "fit",
        "--dataset",
        p(&fixture("datasets/synthetic.csv")),
        "--target",
        "energy",
        "--out",
        p(&pred),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = instmeter(&["predict", "--predictor", p(&pred), "--cycles", "1000000"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("mJ"), "{text}");

    let out = instmeter(&[
        "predict",
        "--predictor",
        p(&pred),
        "--model",
        p(&fixture("models/tiny_cnn.json")),
        "--lib",
        p(&lib),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn parse_and_extract_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let bin_json = dir.path().join("bin.json");
    let dis = fixture("kernels/arm_mini_kernel.dis");
    let src = fixture("kernels/arm_mini_kernel.src.json");

    let out = instmeter(&["parse-disasm", "--input", p(&dis), "--out", p(&bin_json)]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&bin_json).unwrap()).unwrap();
    assert_eq!(doc["functions"][0]["symbol"], "arm_mini_kernel");

    for side in [["--src", p(&src)], ["--bin", p(&bin_json)]] {
        let out = instmeter(&["extract-loops", side[0], side[1]]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stdout).contains("\"loops\""));
    }

    // a parsed document and the raw listing give the same mapping
    let a = instmeter(&["map", "--src", p(&src), "--bin", p(&dis)]);
    let b = instmeter(&["map", "--src", p(&src), "--bin", p(&bin_json)]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn build_lib_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.json"), dir.path().join("y.json"));
    for f in [&x, &y] {
        let out = instmeter(&[
            "--seed",
            "9",
            "build-lib",
            "--manifest",
            p(&fixture("manifest.json")),
            "--out",
            p(f),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap());
}

#[test]
fn eval_writes_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eval");
    let out = instmeter(&[
        "eval",
        "--dataset",
        p(&fixture("datasets/synthetic.csv")),
        "--target",
        "latency",
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("eval_errors.csv")).unwrap();
    assert!(csv.starts_with("model_id,cycles,measured,predicted,relative_error_pct"));
    assert_eq!(csv.lines().count(), 1 + 30 - 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("eval_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["n_test"], 25);
    assert!(
        summary["percentiles"]["p90"].as_f64().unwrap()
            >= summary["percentiles"]["p50"].as_f64().unwrap()
    );
}
