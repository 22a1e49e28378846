use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecg-agent"))
}

#[test]
fn measure_json_matches_the_rate() {
    let out = bin().args(["measure", "synth:normal:hr=75:seed=1:lead=lead_ii", "--json"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["heart_rate_bpm"].as_f64().unwrap() - 75.0).abs() <= 1.0);
}

#[test]
fn usage_and_config_errors_fail() {
    let out = bin().args(["measure", "--bogus-flag", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[server]\nprot = 1\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).args(["measure", "synth:normal:hr=75:seed=1:lead=lead_ii"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prot"));
    let out = bin().args(["measure", "/no/such/file.csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_then_eval_gt_replay() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("mtd");
    let out = bin().args(["synth-mtd", "--n", "10", "--seed", "3", "--out"]).arg(&corpus).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(corpus.join("dialogues.jsonl").exists());

    let report = dir.path().join("report.json");
    let out = bin()
        .args(["eval", "--agent", "gt-replay", "--mode", "with-gt", "--dataset"])
        .arg(corpus.join("dialogues.jsonl"))
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["per_lead"]["lead_ii"]["nap_with_gt"], 100.0);
    assert_eq!(v["metadata"]["model_id"], "gt-replay");
}

#[test]
fn synth_ecg_writes_a_loadable_record() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = bin().args(["synth-ecg", "--hr", "90", "--seed", "5", "--out"]).arg(&csv).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin().arg("measure").arg(&csv).arg("--json").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["heart_rate_bpm"].as_f64().unwrap() - 90.0).abs() <= 1.0);
}

#[test]
fn serve_on_port_zero_reports_its_port() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = bin()
        .args(["serve", "--port", "0", "--data-dir"])
        .arg(dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let port = lines
        .by_ref()
        .map_while(Result::ok)
        .find_map(|l| l.strip_prefix("port ").map(|p| p.trim().parse::<u16>().unwrap()))
        .expect("port line");
    let body = ureq::get(&format!("http://127.0.0.1:{port}/v1/health")).call().unwrap().body_mut().read_to_string().unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["status"], "ok");
}
