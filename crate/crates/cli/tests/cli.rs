use std::path::Path;
use std::process::{Command, Output};

fn netdecomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netdecomp")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("report on stdout")
}

#[test]
fn carve_prints_a_passing_report() {
    let out = netdecomp(&["carve", "--graph", "regular:64:4:1", "--x", "2", "--seeds", "0,1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["runs"].as_array().unwrap().len(), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("PASS"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(netdecomp(&["carve"]).status.code(), Some(2));
    assert_eq!(netdecomp(&["carve", "--graph", "regular:63:3:1"]).status.code(), Some(2));
    assert_eq!(netdecomp(&["carve", "--graph", "blob:3"]).status.code(), Some(2));
    assert_eq!(netdecomp(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"command": "carve", "graph": {"generator": {"kind": "path", "n": 4}}, "colour": 1}"#).unwrap();
    assert_eq!(netdecomp(&["carve", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(netdecomp(&["decompose", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"graph": {"generator": {"kind": "torus", "w": 6, "h": 6}}, "x": 4}"#).unwrap();
    let out = netdecomp(&["carve", "--graph", "path:5", "--x", "2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["config"]["x"], 4);
    assert_eq!(r["runs"][0]["n"], 36);
}

#[test]
fn decompose_then_validate_with_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let out = netdecomp(&[
        "decompose",
        "--graph",
        "regular:128:4:3",
        "--k",
        "2",
        "--report",
        &p("report.json"),
        "--csv",
        &p("phases.csv"),
        "--out-decomposition",
        &p("nd.json"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(p("phases.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(csv.starts_with("seed,stage,index"));
    let ok = netdecomp(&["validate", "--graph", "regular:128:4:3", "--input-decomposition", &p("nd.json")]);
    assert_eq!(ok.status.code(), Some(0));
    // same decomposition, different graph: the guarantee check fails
    let bad = netdecomp(&["validate", "--graph", "regular:128:4:4", "--input-decomposition", &p("nd.json")]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn lll_and_pipeline_write_assignments() {
    let dir = tempfile::tempdir().unwrap();
    let assign = dir.path().join("a.json");
    let out = netdecomp(&["lll", "--graph", "regular:64:6:2", "--out-assignment", assign.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["runs"][0]["violated"], 0);
    let check = netdecomp(&["validate", "--graph", "regular:64:6:2", "--input-assignment", assign.to_str().unwrap()]);
    assert_eq!(check.status.code(), Some(0));
    let audit = dir.path().join("audit.jsonl");
    let out = netdecomp(&[
        "pipeline",
        "--graph",
        "regular:64:10:5",
        "--gate",
        "residual",
        "--audit",
        audit.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(&audit).exists());
}

#[test]
fn reports_are_reproducible() {
    let args = ["carve", "--graph", "regular:96:4:7", "--algorithm", "fast", "--x", "3", "--seeds", "0..3"];
    assert_eq!(netdecomp(&args).stdout, netdecomp(&args).stdout);
}

#[test]
fn bench_prints_csv() {
    let out = netdecomp(&["bench", "--task", "carve", "--graph", "regular:64:4:1", "--seeds", "0,1", "--repeat", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "task,seed,repeat,n,m,rounds,passed,millis");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("carve,0,0,64,128,"));
}
