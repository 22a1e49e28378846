#![allow(dead_code)]

use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::Duration;

use ecg_agent::agent::{Backend, BackendError, BackendRequest, RulePolicyBackend};
use ecg_agent_service::{serve, AppState, BackendFactory, Config};
use serde_json::Value;

/// The service on an ephemeral port, in its own runtime thread.
pub struct TestServer {
    pub base: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(config: Config, backends: BackendFactory) -> Self {
        let (addr_tx, addr_rx) = mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let app = match AppState::open(config, backends) {
                    Ok(a) => a,
                    Err(e) => {
                        addr_tx.send(Err(e.to_string())).unwrap();
                        return;
                    }
                };
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(Ok(listener.local_addr().unwrap())).unwrap();
                serve(listener, app, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap().expect("service starts");
        TestServer { base: format!("http://{addr}"), shutdown: Some(stop_tx), thread: Some(thread) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.stop();
    }
}

pub fn config(data_dir: &std::path::Path) -> Config {
    let mut c = Config::default();
    c.server.data_dir = data_dir.to_path_buf();
    c
}

pub fn rule_policy() -> BackendFactory {
    std::sync::Arc::new(|| Box::new(RulePolicyBackend) as Box<dyn Backend>)
}

/// Rule policy that takes its time, to hold a turn in flight.
pub struct SlowBackend(pub Duration);

impl Backend for SlowBackend {
    fn id(&self) -> &str {
        "slow-rule-policy"
    }

    fn complete(&mut self, request: &BackendRequest) -> Result<String, BackendError> {
        std::thread::sleep(self.0);
        RulePolicyBackend.complete(request)
    }
}

pub fn client() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn post(url: &str, body: &Value) -> (u16, Value) {
    let mut resp = client().post(url).send_json(body).expect("request completes");
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

/// Status and raw body bytes.
pub fn get_raw(url: &str) -> (u16, String) {
    let mut resp = client().get(url).call().expect("request completes");
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

pub fn get(url: &str) -> (u16, Value) {
    let (s, body) = get_raw(url);
    (s, serde_json::from_str(&body).unwrap())
}

/// A `lead_i` CSV fixture with a known rate.
pub fn lead_i_csv(hr: f64) -> (String, f64) {
    let params = ecg_agent::signal::SynthParams {
        lead_config: ecg_agent::signal::LeadConfig::LeadI,
        ..ecg_agent::signal::SynthParams::new(hr, 10.0, 500.0, 0.0, 3)
    };
    let (rec, _) = ecg_agent::signal::synthesize_with(&params).unwrap();
    let mut s = String::from("I\n");
    for x in &rec.leads()[0].samples {
        s.push_str(&format!("{x}\n"));
    }
    (s, rec.sampling_rate_hz())
}

/// Heart rate from the synthesizer's own beat schedule.
pub fn oracle_hr(hr: f64) -> f64 {
    let params = ecg_agent::signal::SynthParams {
        lead_config: ecg_agent::signal::LeadConfig::LeadI,
        ..ecg_agent::signal::SynthParams::new(hr, 10.0, 500.0, 0.0, 3)
    };
    let (_, truth) = ecg_agent::signal::synthesize_with(&params).unwrap();
    let r = truth.r_peaks();
    let mean_rr = (r[r.len() - 1] - r[0]) as f64 / (r.len() - 1) as f64 / truth.sampling_rate_hz;
    60.0 / mean_rr
}

pub fn wait_for_job(server: &TestServer, job_id: &str) -> Value {
    for _ in 0..600 {
        let (s, v) = get(&server.url(&format!("/v1/eval/{job_id}")));
        assert_eq!(s, 200);
        if v["status"] == "done" || v["status"] == "failed" {
            return v;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    panic!("job {job_id} did not finish");
}
