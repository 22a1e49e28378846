mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use ecg_agent::agent::{Backend, ScriptedBackend};
use ecg_agent::dialogue::{parse_dialogue, GrammarMode};
use serde_json::{json, Value};

fn create(server: &TestServer, body: Value) -> (u16, Value) {
    post(&server.url("/v1/sessions"), &body)
}

fn say(server: &TestServer, id: &str, action: &str, content: &str) -> (u16, Value) {
    post(&server.url(&format!("/v1/sessions/{id}/messages")), &json!({ "action": action, "content": content }))
}

fn actions(turns: &Value) -> Vec<String> {
    turns.as_array().unwrap().iter().map(|t| t["action"].as_str().unwrap().to_string()).collect()
}

#[test]
fn health_reports_version() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(config(dir.path()), rule_policy());
    let (s, v) = get(&server.url("/v1/health"));
    assert_eq!(s, 200);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn lead_i_csv_upload_creates_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(config(dir.path()), rule_policy());
    let (csv, fs) = lead_i_csv(75.0);
    let (s, v) = create(&server, json!({ "csv": csv, "sampling_rate_hz": fs, "lead_config": "lead_i" }));
    assert_eq!(s, 201, "{v}");
    assert!(v["session_id"].as_str().unwrap().starts_with("s-"));
    assert_eq!(v["lead_config"], "lead_i");
    assert_eq!(v["next_user_actions"], json!(["ecg_inquiry"]));
}

#[test]
fn invalid_records_are_400_with_error_body() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(config(dir.path()), rule_policy());
    for body in [
        json!({ "csv": "I\nnot-a-number\n", "sampling_rate_hz": 500.0 }),
        json!({ "csv": "I\n0.1\n" }),
        json!({ "record_ref": "synth:unknown:hr=1" }),
        json!({}),
    ] {
        let (s, v) = create(&server, body.clone());
        assert_eq!(s, 400, "{body}");
        assert!(v["code"].is_string() && v["message"].is_string() && v.get("detail").is_some(), "{v}");
    }
    let (s, v) = create(&server, json!({ "record_ref": "synth:normal:hr=70:seed=1:lead=lead_ii", "colour": 1 }));
    assert_eq!(s, 422);
    assert_eq!(v["code"], "invalid_body");
    let (s, v) = get(&server.url("/v1/sessions/nope"));
    assert_eq!((s, v["code"].as_str()), (404, Some("not_found")));
}

#[test]
fn scripted_inquiry_reports_the_tool_heart_rate() {
    let dir = tempfile::tempdir().unwrap();
    let hr_text = format!("{:.0}", oracle_hr(75.0));
    let reply = format!("Action: response\nThought: report the rate\nResponse: Your heart rate is {hr_text} bpm.");
    let outputs = vec!["Action: measurement\nThought: need the rate\nToolInput: {}".to_string(), reply];
    let factory: ecg_agent_service::BackendFactory =
        Arc::new(move || Box::new(ScriptedBackend::new(outputs.clone())) as Box<dyn Backend>);
    let server = TestServer::start(config(dir.path()), factory);
    let (csv, fs) = lead_i_csv(75.0);
    let (_, v) = create(&server, json!({ "csv": csv, "sampling_rate_hz": fs }));
    let id = v["session_id"].as_str().unwrap().to_string();

    let (s, v) = say(&server, &id, "ecg_inquiry", "what is my heart rate");
    assert_eq!(s, 200, "{v}");
    assert_eq!(actions(&v["turns"]), ["call_measurement", "response"]);
    let tool_hr = v["turns"][0]["tool_output"]["body"]["heart_rate_bpm"].as_f64().unwrap();
    assert!((tool_hr - oracle_hr(75.0)).abs() <= 1.0);
    assert!(v["turns"][1]["content"].as_str().unwrap().contains(&format!("{tool_hr:.0} bpm")));
}

#[test]
fn bye_ends_the_session_and_later_messages_are_410() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(config(dir.path()), rule_policy());
    let (_, v) = create(&server, json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii" }));
    let id = v["session_id"].as_str().unwrap().to_string();
    let (s, v) = say(&server, &id, "request_follow_up", "more?");
    assert_eq!((s, v["code"].as_str()), (400, Some("illegal_action")));
    assert_eq!(say(&server, &id, "ecg_inquiry", "Is my rhythm normal?").0, 200);
    let (s, v) = say(&server, &id, "user_bye", "Thanks, bye.");
    assert_eq!(s, 200);
    assert_eq!(actions(&v["turns"]), ["system_bye"]);
    assert_eq!(v["terminal"], true);
    let (s, v) = say(&server, &id, "ecg_inquiry", "one more");
    assert_eq!((s, v["code"].as_str()), (410, Some("session_terminal")));

    let (_, view) = get(&server.url(&format!("/v1/sessions/{id}")));
    let d = parse_dialogue(view["transcript"].to_string().as_bytes()).unwrap();
    d.replay(GrammarMode::Runtime).unwrap();
    assert!(d.is_complete());
}

#[test]
fn concurrent_messages_one_wins_one_gets_409() {
    let dir = tempfile::tempdir().unwrap();
    let factory: ecg_agent_service::BackendFactory =
        Arc::new(|| Box::new(SlowBackend(Duration::from_millis(400))) as Box<dyn Backend>);
    let server = TestServer::start(config(dir.path()), factory);
    let (_, v) = create(&server, json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii" }));
    let id = v["session_id"].as_str().unwrap().to_string();
    let url = server.url(&format!("/v1/sessions/{id}/messages"));
    let threads: Vec<_> = (0..2)
        .map(|_| {
            let url = url.clone();
            std::thread::spawn(move || post(&url, &json!({ "action": "ecg_inquiry", "content": "what is my heart rate" })))
        })
        .collect();
    let mut results: Vec<(u16, Value)> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    results.sort_by_key(|r| r.0);
    assert_eq!(results.iter().map(|r| r.0).collect::<Vec<_>>(), [200, 409]);
    assert_eq!(results[1].1["code"], "turn_in_flight");
    let (_, view) = get(&server.url(&format!("/v1/sessions/{id}")));
    let turns = view["transcript"]["turns"].as_array().unwrap();
    assert_eq!(turns.iter().filter(|t| t["speaker"] == "user").count(), 1);
}

#[test]
fn transcript_survives_restart_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut server = TestServer::start(config(dir.path()), rule_policy());
    let (_, v) = create(&server, json!({ "record_ref": "synth:pvc:hr=70:seed=2:lead=lead_ii" }));
    let id = v["session_id"].as_str().unwrap().to_string();
    say(&server, &id, "ecg_inquiry", "Do I have an arrhythmia?");
    let (_, before) = get_raw(&server.url(&format!("/v1/sessions/{id}")));
    let log = std::fs::read(dir.path().join(format!("sessions/{id}.jsonl"))).unwrap();
    server.stop();

    let server = TestServer::start(config(dir.path()), rule_policy());
    let (s, after) = get_raw(&server.url(&format!("/v1/sessions/{id}")));
    assert_eq!(s, 200);
    assert_eq!(before, after);
    assert_eq!(std::fs::read(dir.path().join(format!("sessions/{id}.jsonl"))).unwrap(), log);
    // the resumed session keeps going
    let (s, v) = say(&server, &id, "user_bye", "bye");
    assert_eq!((s, actions(&v["turns"])), (200, vec!["system_bye".to_string()]));
}

#[test]
fn trace_is_behind_the_debug_flag() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(config(dir.path()), rule_policy());
    let (_, v) = create(&server, json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii" }));
    let id = v["session_id"].as_str().unwrap().to_string();
    let (s, v) = get(&server.url(&format!("/v1/sessions/{id}/trace")));
    assert_eq!((s, v["code"].as_str()), (404, Some("trace_disabled")));
    drop(server);

    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.server.debug_trace = true;
    let server = TestServer::start(c, rule_policy());
    let (_, v) = create(&server, json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii" }));
    let id = v["session_id"].as_str().unwrap().to_string();
    say(&server, &id, "ecg_inquiry", "what is my heart rate");
    let (s, v) = get(&server.url(&format!("/v1/sessions/{id}/trace")));
    assert_eq!(s, 200);
    let trace = v["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 2);
    assert!(trace.iter().all(|t| !t["thought"].as_str().unwrap().is_empty() && !t["attempts"].as_array().unwrap().is_empty()));
}

#[test]
fn tool_endpoints_and_record_samples() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(config(dir.path()), rule_policy());
    let (s, v) = post(&server.url("/v1/tools/measurement"), &json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii" }));
    assert_eq!(s, 200);
    assert_eq!(v["status"], "valid");
    let (s, v) = post(
        &server.url("/v1/tools/explanation"),
        &json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii", "class_code": "NOPE" }),
    );
    assert_eq!(s, 200);
    assert_eq!(v["status"], "invalid");
    assert!(v["body"].is_null() && v["reason"].is_string());
    let (s, v) = post(&server.url("/v1/tools/measurement"), &json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii", "class_code": "SR" }));
    assert_eq!((s, v["code"].as_str()), (400, Some("invalid_request")));
    assert_eq!(post(&server.url("/v1/tools/teleport"), &json!({})).0, 404);

    let (_, c) = create(&server, json!({ "record_ref": "synth:normal:hr=75:seed=1:lead=lead_ii" }));
    let id = c["session_id"].as_str().unwrap();
    let (s, r) = get(&server.url(&format!("/v1/sessions/{id}/record")));
    assert_eq!(s, 200);
    assert_eq!(r["leads"][0]["name"], "II");
    assert_eq!(r["leads"][0]["samples"].as_array().unwrap().len() as f64, r["duration_s"].as_f64().unwrap() * r["sampling_rate_hz"].as_f64().unwrap());
}

#[test]
fn eval_job_runs_on_the_pool() {
    use ecg_agent::mtd::{build_corpus, CorpusConfig, CorpusSize, TemplatedGenerator, ToolCache};
    let dir = tempfile::tempdir().unwrap();
    let corpus = build_corpus(
        &CorpusConfig { lead_config: ecg_agent::signal::LeadConfig::LeadII, seed: 4, size: CorpusSize::Sample(12) },
        &TemplatedGenerator,
        &ToolCache::new(),
    )
    .unwrap();
    let server = TestServer::start(config(dir.path()), rule_policy());
    let (s, job) = post(&server.url("/v1/eval"), &json!({ "dialogues": corpus.dialogues, "agent": "gt_replay" }));
    assert_eq!(s, 202, "{job}");
    assert_eq!(job["status"], "queued");
    let done = wait_for_job(&server, job["job_id"].as_str().unwrap());
    assert_eq!(done["status"], "done", "{done}");
    let lead = &done["report"]["per_lead"]["lead_ii"];
    assert_eq!(lead["nap_with_gt"], 100.0);
    assert_eq!(lead["nap_without_gt"], 100.0);

    let (s, v) = post(&server.url("/v1/eval"), &json!({ "agent": "gt_replay" }));
    assert_eq!((s, v["code"].as_str()), (400, Some("invalid_request")));
    let (s, job) = post(&server.url("/v1/eval"), &json!({ "dataset": "/does/not/exist" }));
    assert_eq!(s, 202);
    assert_eq!(wait_for_job(&server, job["job_id"].as_str().unwrap())["status"], "failed");
}
