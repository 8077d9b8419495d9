//! End-to-end exercise of the binary: generate a corpus, run two strategies,
//! analyze their traces, and sweep a scaling grid.

use std::path::Path;
use std::process::{Command, Output};

fn tsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsearch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_on_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("corpus.jsonl");
    let manifest_str = manifest.to_str().unwrap();

    let out = tsearch(&["gen-corpus", "--preset", "smoke", "--out", manifest_str]);
    assert_success(&out, "gen-corpus");
    assert!(manifest.exists());

    let us_dir = dir.path().join("us");
    let out = tsearch(&[
        "run",
        "--manifest",
        manifest_str,
        "--strategy",
        "us",
        "--backend",
        "oracle",
        "--out-dir",
        us_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "run us");
    for artifact in ["traces.jsonl", "report.json", "report.csv"] {
        assert!(us_dir.join(artifact).exists(), "missing {artifact}");
    }

    let utv_dir = dir.path().join("utv");
    let out = tsearch(&[
        "run",
        "--manifest",
        manifest_str,
        "--strategy",
        "utv",
        "--backend",
        "oracle",
        "--utv-intervals",
        "4",
        "--out-dir",
        utv_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "run utv");

    // Flags layer over a config file.
    let config_path = dir.path().join("cfg.json");
    std::fs::write(&config_path, r#"{"k": 4, "c1": 0.95, "n": 3}"#).unwrap();
    let bfs_dir = dir.path().join("bfs");
    let out = tsearch(&[
        "run",
        "--manifest",
        manifest_str,
        "--strategy",
        "ts-bfs",
        "--backend",
        "oracle",
        "--config",
        config_path.to_str().unwrap(),
        "--k",
        "2",
        "--workers",
        "4",
        "--parallel-width",
        "6",
        "--out-dir",
        bfs_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "run ts-bfs");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("accuracy"),
        "run summary missing accuracy: {stdout}"
    );

    let analysis_dir = dir.path().join("analysis");
    let out = tsearch(&[
        "analyze",
        "--traces",
        us_dir.join("traces.jsonl").to_str().unwrap(),
        "--traces",
        utv_dir.join("traces.jsonl").to_str().unwrap(),
        "--out-dir",
        analysis_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "analyze");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("video-level"));
    assert!(stdout.contains("interval-level"));
    assert!(analysis_dir.join("confidence_analysis.json").exists());

    let scaling_dir = dir.path().join("scaling");
    let out = tsearch(&[
        "scaling",
        "--manifest",
        manifest_str,
        "--strategy",
        "ts-bfs",
        "--backend",
        "oracle",
        "--grid",
        "1,3",
        "--workers",
        "4",
        "--out-dir",
        scaling_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "scaling");
    let curve = std::fs::read_to_string(scaling_dir.join("scaling.jsonl")).unwrap();
    assert_eq!(curve.lines().count(), 2);
}

#[test]
fn run_rejects_missing_manifest_and_bad_threshold() {
    let out = tsearch(&[
        "run",
        "--manifest",
        "/nonexistent/m.jsonl",
        "--strategy",
        "us",
        "--backend",
        "oracle",
        "--out-dir",
        "/tmp/never",
    ]);
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.jsonl");
    std::fs::write(&traces, "").unwrap();
    let out = tsearch(&[
        "analyze",
        "--traces",
        traces.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--thresholds",
        "0.5,1.01",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("capped at 1.0"), "stderr: {stderr}");
}

#[test]
fn gen_corpus_spec_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    let spec = r#"{
        "seed": 3,
        "fps": 1.0,
        "options_per_question": 4,
        "resolution_frames": 120,
        "conf_floor": 0.1,
        "conf_ceil": 0.9,
        "noise_sigma": 0.05,
        "p_hint": 0.5,
        "groups": [
            {"group": "short", "count": 3, "duration_s": [60.0, 300.0], "target_fraction": [0.05, 0.2]}
        ]
    }"#;
    std::fs::write(&spec_path, spec).unwrap();
    let manifest = dir.path().join("m.jsonl");
    let out = tsearch(&[
        "gen-corpus",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        manifest.to_str().unwrap(),
    ]);
    assert_success(&out, "gen-corpus with spec file");
    let lines = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(lines.lines().count(), 3);
    assert!(Path::new(&manifest).exists());
}
