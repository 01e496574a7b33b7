use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn scent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scent"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn compose_reads_the_bundled_file() {
    let out = scent(&["compose", &data("demo.mid")]);
    assert_eq!(out.status.code(), Some(0));
    let comp: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let events = comp["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["duration"], 15.0);
}

#[test]
fn empty_midi_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("empty.mid");
    std::fs::write(&f, b"").unwrap();
    let out = scent(&["compose", path(&f)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn validate_accepts_the_bundled_cue() {
    let out = scent(&["validate", &data("cade_cue.json")]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn overlong_event_is_rejected_with_one_row() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("long.json");
    let comp = r#"{"name": "long", "events": [{"device_address": 0, "odor_channel": 0,
        "concentration": 1.0, "onset": 0.0, "duration": 600.0}]}"#;
    std::fs::write(&f, comp).unwrap();
    let out = scent(&["validate", path(&f)]);
    assert_eq!(out.status.code(), Some(1));
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("over_duration"));
}

#[test]
fn missing_policy_file_is_a_usage_error() {
    let out = scent(&[
        "validate",
        &data("cade_cue.json"),
        "--policy",
        "/nonexistent/policy.toml",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("policy.toml"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(scent(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(scent(&[]).status.code(), Some(2));
    assert_eq!(scent(&["--help"]).status.code(), Some(0));
}

#[test]
fn analyze_reports_perfect_alpha_for_twin_items() {
    let out = scent(&[
        "analyze",
        &data("survey_twin.csv"),
        "--scales",
        &data("survey_twin.toml"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["alpha"][0]["alpha"], 1.0);
}

#[test]
fn analyze_names_an_unknown_item() {
    let dir = TempDir::new().unwrap();
    let scales = dir.path().join("scales.toml");
    std::fs::write(
        &scales,
        "scale_min = 1\nscale_max = 7\n[[scale]]\nname = \"twin\"\nitems = [\"q1\", \"q9\"]\n",
    )
    .unwrap();
    let out = scent(&[
        "analyze",
        &data("survey_twin.csv"),
        "--scales",
        path(&scales),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q9"));
}

#[test]
fn analyze_writes_scores() {
    let dir = TempDir::new().unwrap();
    let out = scent(&[
        "analyze",
        &data("presence_responses.csv"),
        "--scales",
        &data("presence_scales.toml"),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let scores = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 9);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn synthesized_breathing_is_detected() {
    let dir = TempDir::new().unwrap();
    for name in ["trace.csv", "trace.bin"] {
        let trace = dir.path().join(name);
        let out = scent(&[
            "breath",
            "synth",
            "--bpm",
            "12",
            "--duration",
            "60",
            "--out",
            path(&trace),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let out = scent(&["breath", "detect", path(&trace)]);
        assert_eq!(out.status.code(), Some(0));
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["counts"]["inhale"], 12);
        assert_eq!(report["counts"]["exhale"], 12);
        assert_eq!(report["counts"]["sniff"], 0);
    }
}

#[test]
fn detect_rejects_a_malformed_window() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.csv");
    scent(&["breath", "synth", "--duration", "20", "--out", path(&trace)]);
    let out = scent(&["breath", "detect", path(&trace), "--window", "5-7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_repeatable() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let out = scent(&["simulate", "--seed", "7", "--out", path(dir.path())]);
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |d: &TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "session.jsonl"), read(&b, "session.jsonl"));
    assert_eq!(read(&a, "summary.json"), read(&b, "summary.json"));
    let summary: serde_json::Value = serde_json::from_slice(&read(&a, "summary.json")).unwrap();
    assert_eq!(summary["scripted_duration_s"], 342.0);
    assert_eq!(summary["exposure_s"], 15.0);
}

#[test]
fn simulate_reports_rejected_cues() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("twice.toml");
    std::fs::write(
        &scenario,
        r#"name = "twice"
duration_s = 60.0

[[cues]]
label = "puff"
events = [{ device_address = 0, odor_channel = 0, concentration = 0.5, onset = 0.0, duration = 5.0 }]

[[script]]
at = 10.0
kind = "cue"
label = "puff"

[[script]]
at = 20.0
kind = "cue"
label = "puff"
"#,
    )
    .unwrap();
    let out = scent(&["simulate", "--scenario", path(&scenario)]);
    assert_eq!(out.status.code(), Some(1));
    let log = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        log.lines().filter(|l| l.contains("\"rejected\"")).count(),
        1
    );
}
