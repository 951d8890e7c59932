use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scadascope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scadascope"))
        .args(args)
        .env_remove("SCADASCOPE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    trace: PathBuf,
    truth: PathBuf,
}

fn synth(preset: &str, duration: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let truth = dir.path().join("truth.json");
    let o = scadascope(&["synth", "--preset", preset, "--duration", duration, "--out", s(&trace), "--truth", s(&truth), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    Fixture { dir, trace, truth }
}

#[test]
fn missing_input_exits_2() {
    let o = scadascope(&["analyze", "/nonexistent/trace.pcap", "-q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot open"));
}

#[test]
fn malformed_jsonl_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"timestamp\": 1.0}\n").unwrap();
    let o = scadascope(&["rank", s(&bad), "-q"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2() {
    let f = synth("dataset1", "600");
    let o = scadascope(&["analyze", s(&f.trace), "--num-protocols", "0", "-q"]);
    assert_eq!(o.status.code(), Some(2));
    let o = scadascope(&["analyze", s(&f.trace), "--t-comm", "-1", "-q"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_trace_ranks_to_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = scadascope(&["rank", s(&empty), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(stdout(&o).starts_with("rank,src_ip"));
}

#[test]
fn rank_top_and_summary() {
    let f = synth("dataset1", "1800");
    let o = scadascope(&["rank", s(&f.trace), "--top", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 6);
    assert!(out.lines().skip(1).all(|l| l.contains(",20000,")));
    assert!(stderr(&o).contains("use port 20000"), "{}", stderr(&o));

    let o = scadascope(&["rank", s(&f.trace), "--top", "3", "--format", "json", "-q"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["ranking"].as_array().unwrap().len(), 3);
    assert_eq!(doc["ranking"][0]["rank"], 1);
    assert!(doc["manifest"]["inputs"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn analyze_then_eval() {
    let f = synth("dataset1", "1800");
    let two = f.dir.path().join("two.json");
    let three = f.dir.path().join("three.json");
    let o = scadascope(&["analyze", s(&f.trace), "--out", s(&two)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("port 20000: 49 field devices"), "{}", stderr(&o));

    // without the HMI layer the HMI is a miss
    let o = scadascope(&["eval", "--report", s(&two), "--truth", s(&f.truth), "--format", "json"]);
    let e: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(e["precision"], 1.0);
    assert!(e["recall"].as_f64().unwrap() < 1.0);
    let o = scadascope(&["eval", "--report", s(&two), "--truth", s(&f.truth), "--exclude-hmi"]);
    assert!(stdout(&o).contains("F 1.0000"), "{}", stdout(&o));

    let o = scadascope(&["analyze", s(&f.trace), "--three-layer", "--out", s(&three), "-q"]);
    assert_eq!(o.status.code(), Some(0));
    let o = scadascope(&["eval", "--report", s(&three), "--truth", s(&f.truth)]);
    assert!(stdout(&o).contains("F 1.0000"), "{}", stdout(&o));
}

#[test]
fn too_many_protocols_is_partial() {
    let f = synth("dataset1", "1800");
    let o = scadascope(&["analyze", s(&f.trace), "--num-protocols", "3", "-q"]);
    assert_eq!(o.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["report"]["protocols"][0]["scada_port"], 20000);
}

#[test]
fn office_traffic_is_low_confidence() {
    let f = synth("office", "3600");
    let o = scadascope(&["analyze", s(&f.trace), "-q"]);
    assert_eq!(o.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["report"]["status"], "low_confidence");
}

#[test]
fn dot_output() {
    let f = synth("dataset1", "1800");
    let dot_file = f.dir.path().join("t.dot");
    let o = scadascope(&["analyze", s(&f.trace), "--format", "dot", "--dot", s(&dot_file), "-q"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("graph scada {"));
    assert!(out.contains("doublecircle"));
    assert_eq!(std::fs::read_to_string(&dot_file).unwrap(), out);
    let o = scadascope(&["analyze", s(&f.trace), "--format", "csv", "-q"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pcap_and_jsonl_agree() {
    let dir = tempfile::tempdir().unwrap();
    let jsonl = dir.path().join("t.jsonl");
    let pcap = dir.path().join("t.pcap");
    let o = scadascope(&["synth", "--preset", "dataset2", "--duration", "1200", "--out", s(&jsonl), "--pcap", s(&pcap), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = scadascope(&["rank", s(&jsonl), "--top", "50", "-q"]);
    let b = scadascope(&["rank", s(&pcap), "--top", "50", "-q"]);
    assert_eq!(stdout(&a), stdout(&b));

    let o = scadascope(&["inspect", s(&pcap), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["inputs"][0]["format"], "pcap");
    assert_eq!(doc["inputs"][0]["pcap"]["skipped_non_ip"], 0);
    assert!(doc["filter"].is_object());
}

#[test]
fn stability_table() {
    let f = synth("dataset1", "3600");
    let o = scadascope(&["stability", s(&f.trace), "--fractions", "0.1,0.5,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("1,Complete,20000,49,1,"));
    assert!(rows[3].ends_with(",true"));
    assert!(stderr(&o).contains("smallest stable prefix fraction"));
}

#[test]
fn same_seed_same_bytes() {
    let a = synth("dataset2", "900");
    let b = synth("dataset2", "900");
    assert_eq!(std::fs::read(&a.trace).unwrap(), std::fs::read(&b.trace).unwrap());
    let c = tempfile::tempdir().unwrap();
    let other = c.path().join("x.jsonl");
    scadascope(&["synth", "--preset", "dataset2", "--duration", "900", "--seed", "2", "--out", s(&other), "-q"]);
    assert_ne!(std::fs::read(&a.trace).unwrap(), std::fs::read(&other).unwrap());
}
