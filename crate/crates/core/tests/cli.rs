use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use voltvar::network::{load_case, write_case};

fn voltvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltvar"))
        .args(args)
        .env_remove("VOLTVAR_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SINGLE_LINE: &str = r#"{
    "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
    "buses": [{"id": 1}],
    "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
}"#;

const CHAIN: &str = r#"{
    "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
    "buses": [{"id": 1}, {"id": 2}],
    "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.01},
              {"from": 1, "to": 2, "r_pu": 0.01, "x_pu": 0.01}]
}"#;

fn feeder(dir: &Path, buses: usize) -> String {
    let p = dir.join("case.json");
    let o = voltvar(&["make-case", "--buses", &buses.to_string(), "--seed", "3", "-o", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    p.to_str().unwrap().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_l_single_line_and_chain() {
    let dir = TempDir::new().unwrap();
    for (text, want) in [(SINGLE_LINE, vec![("1", 0.02)]), (CHAIN, vec![("1", 0.02), ("2", 0.03)])] {
        let case = write(dir.path(), "c.json", text);
        let out = dir.path().join("l.json");
        let o = voltvar(&["synth-l", "--case", &case, "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v = read_json(&out);
        let l = v["l"].as_object().unwrap();
        assert_eq!(l.len(), want.len());
        for (k, x) in want {
            assert!((l[k].as_f64().unwrap() - x).abs() < 1e-9, "{k}: {}", l[k]);
        }
        let cert = &v["certificate"];
        assert!(cert["min_eig"].as_f64().unwrap() >= -cert["tolerance"].as_f64().unwrap());
        assert_eq!(cert["feasible"], Value::Bool(true));
    }
}

#[test]
fn check_reports_sigma_min_and_catches_corruption() {
    let dir = TempDir::new().unwrap();
    let case = feeder(dir.path(), 20);
    let o = voltvar(&["check", "--case", &case]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("sigma_min"));
    assert_eq!(text.lines().count(), 5);

    let o = voltvar(&["check", "--case", &case, "--corrupt-a", "0.01"]);
    assert!(o.status.success());
    let sym = stdout(&o).lines().find(|l| l.starts_with("A symmetric")).unwrap().to_string();
    assert!(sym.contains("FAIL"), "{sym}");
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = TempDir::new().unwrap();
    let case = feeder(dir.path(), 25);
    let out = dir.path().join("run");
    let o = voltvar(&[
        "run", "--case", &case, "--controllers", "asalvc,gpdc", "--mode", "offline", "--plant", "linear", "--oracle",
        "-o", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&out.join("summary.json"));
    let ctrls = summary["controllers"].as_array().unwrap();
    assert_eq!(ctrls.len(), 2);
    let oracle = summary["oracle_objective"].as_f64().unwrap();
    for c in ctrls {
        assert!(c["iterations"].as_u64().unwrap() >= 1);
        assert!(c["gap"].as_f64().is_some());
        let trace = out.join(c["trace"].as_str().unwrap());
        let text = fs::read_to_string(trace).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("step,time_s,objective,mismatch,band_violations,capacity_violations,saturated,v_1"));
        assert!(header.ends_with(",q_25"));
    }
    assert_eq!(ctrls[0]["controller"], "asalvc");
    assert!((ctrls[0]["metrics"]["final_objective"].as_f64().unwrap() - oracle).abs() < 1e-10);
}

#[test]
fn missing_case_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let o = voltvar(&["run", "--case", missing.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"));

    let o = voltvar(&["run", "--case", missing.to_str().unwrap(), "--controllers", "pid"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spec_file_and_timeline_round_trip() {
    let dir = TempDir::new().unwrap();
    let case = feeder(dir.path(), 15);
    let tl = dir.path().join("tl.csv");
    let o = voltvar(&[
        "make-timeline", "--case", &case, "--kind", "sudden", "--steps", "40", "-o", tl.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header = fs::read_to_string(&tl).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("time_s,p_load_1,q_load_1,p_pv_1,p_load_2"));

    let out = dir.path().join("out");
    let spec = serde_json::json!({
        "case": case,
        "scenario": {"kind": "static", "timeline": tl},
        "controllers": ["asalvc", {"kind": "cdc", "a": vec![0.5; 15]}],
        "plant": "nonlinear",
        "mode": "online",
        "out_dir": out,
    });
    let spec_path = write(dir.path(), "spec.json", &spec.to_string());
    let o = voltvar(&["--threads", "2", "run", "--spec", &spec_path]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["timeline_steps"], 40);
    assert!(out.join("trace_cdc.csv").is_file());
}

#[test]
fn plant_failure_exits_with_numerical_code() {
    let dir = TempDir::new().unwrap();
    let case = write(
        dir.path(),
        "wide.json",
        r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "buses": [{"id": 1, "p_load_pu": 0.5, "der": {"capacity_pu": 60, "q_min_pu": -50, "q_max_pu": 50}}],
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
        }"#,
    );
    let out = dir.path().join("out");
    let spec = serde_json::json!({
        "case": case,
        "controllers": [{"kind": "cdc", "a": [1000.0]}],
        "out_dir": out,
    });
    let spec_path = write(dir.path(), "spec.json", &spec.to_string());
    let o = voltvar(&["run", "--spec", &spec_path]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    let summary = read_json(&out.join("summary.json"));
    assert!(summary["controllers"][0]["metrics"]["failure"].is_string());
}

#[test]
fn written_case_reloads_identically() {
    let dir = TempDir::new().unwrap();
    let case = load_case(feeder(dir.path(), 40)).unwrap();
    let p = dir.path().join("again.json");
    write_case(&case, &p).unwrap();
    assert_eq!(load_case(&p).unwrap(), case);
}

#[test]
fn zero_threads_is_rejected() {
    let dir = TempDir::new().unwrap();
    let case = write(dir.path(), "c.json", SINGLE_LINE);
    let o = Command::new(env!("CARGO_BIN_EXE_voltvar"))
        .args(["run", "--case", &case, "-o", dir.path().join("o").to_str().unwrap()])
        .env("VOLTVAR_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
