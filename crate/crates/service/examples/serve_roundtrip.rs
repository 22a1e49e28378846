//! Starts the service on an ephemeral port and holds a short conversation
//! with the rule-policy backend over `/v1`.

use std::sync::Arc;

use ecg_agent::agent::{Backend, RulePolicyBackend};
use ecg_agent_service::{serve, AppState, Config};
use serde_json::{json, Value};

fn post(agent: &ureq::Agent, url: &str, body: &Value) -> Value {
    let mut resp = agent.post(url).send_json(body).expect("request");
    serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap()
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::default();
    config.server.data_dir = dir.path().to_path_buf();
    let app = AppState::open(config, Arc::new(|| Box::new(RulePolicyBackend) as Box<dyn Backend>)).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, app, async {
        let _ = stopped.await;
    }));

    let client = tokio::task::spawn_blocking(move || {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        let v = post(&agent, &format!("{base}/v1/sessions"), &json!({ "record_ref": "synth:pvc:hr=70:seed=2:lead=lead_i" }));
        let id = v["session_id"].as_str().unwrap().to_string();
        println!("session {id}");
        let messages = format!("{base}/v1/sessions/{id}/messages");
        for (action, content) in [("ecg_inquiry", "Is my rhythm normal?"), ("user_bye", "Thanks, bye.")] {
            println!("user [{action}] {content}");
            let reply = post(&agent, &messages, &json!({ "action": action, "content": content }));
            for t in reply["turns"].as_array().unwrap() {
                match t.get("tool_output") {
                    Some(out) if !out.is_null() => println!("  agent [{}] -> {}", t["action"].as_str().unwrap(), out["status"]),
                    _ => println!("  agent [{}] {}", t["action"].as_str().unwrap(), t["content"].as_str().unwrap_or("")),
                }
            }
            println!("  terminal: {}", reply["terminal"]);
        }
    });
    client.await.unwrap();
    let _ = stop.send(());
    server.await.unwrap().unwrap();
}
