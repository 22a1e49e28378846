//! Adapter for a classifier served over HTTP.
//!
//! Request: `{record_id, lead_config, samples_by_lead, sampling_rate_hz}`.
//! Response: `{scores: {code: probability}}`. Responses are checked against
//! the output invariants before use; every failure becomes an invalid status.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ClassificationOutput, Classifier, DiagnosticClass, DEFAULT_THRESHOLD};
use crate::signal::EcgRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("timeout")]
    Timeout,
    #[error("connection failure: {0}")]
    Connection(String),
    #[error("http status {0}")]
    Status(u16),
    #[error("undecodable response: {0}")]
    Decode(String),
}

impl TransportError {
    /// Short reason code used in invalid tool statuses.
    pub fn reason(&self) -> String {
        match self {
            TransportError::Timeout => "timeout".into(),
            TransportError::Connection(_) => "connection_failure".into(),
            TransportError::Status(c) => format!("http_status_{c}"),
            TransportError::Decode(_) => "schema_violation".into(),
        }
    }
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &Value, timeout: Duration) -> Result<Value, TransportError>;

    /// Same as `post_json` with extra request headers. Transports that have
    /// no notion of headers ignore them.
    fn post_json_with_headers(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let _ = headers;
        self.post_json(url, body, timeout)
    }
}

#[derive(Debug, Default, Clone)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, body: &Value, timeout: Duration) -> Result<Value, TransportError> {
        self.post_json_with_headers(url, &[], body, timeout)
    }

    fn post_json_with_headers(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send_json(body).map_err(map_ureq)?;
        resp.body_mut().read_json::<Value>().map_err(map_ureq)
    }
}

pub(crate) fn map_ureq(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        ureq::Error::StatusCode(c) => TransportError::Status(c),
        ureq::Error::Json(j) => TransportError::Decode(j.to_string()),
        other => TransportError::Connection(other.to_string()),
    }
}

type Responder = dyn Fn(&Value) -> Result<Value, TransportError> + Send + Sync;

/// In-process transport; records each request body.
#[derive(Clone)]
pub struct MockTransport {
    respond: Arc<Responder>,
    pub requests: Arc<Mutex<Vec<Value>>>,
}

impl MockTransport {
    pub fn new(respond: impl Fn(&Value) -> Result<Value, TransportError> + Send + Sync + 'static) -> Self {
        MockTransport {
            respond: Arc::new(respond),
            requests: Arc::default(),
        }
    }

    pub fn fixed(response: Value) -> Self {
        MockTransport::new(move |_| Ok(response.clone()))
    }
}

impl Transport for MockTransport {
    fn post_json(&self, _url: &str, body: &Value, _timeout: Duration) -> Result<Value, TransportError> {
        self.requests.lock().expect("mock lock").push(body.clone());
        (self.respond)(body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointDescriptor {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl EndpointDescriptor {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointDescriptor {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

pub struct ExternalClassifier {
    endpoint: EndpointDescriptor,
    transport: Box<dyn Transport>,
}

/// Checks the descriptor and returns a handle using `transport`.
pub fn attach_external_classifier(
    endpoint: EndpointDescriptor,
    transport: Box<dyn Transport>,
) -> Result<ExternalClassifier, String> {
    let uri: ureq::http::Uri = endpoint
        .url
        .parse()
        .map_err(|e| format!("endpoint url `{}`: {e}", endpoint.url))?;
    if !matches!(uri.scheme_str(), Some("http" | "https")) || uri.host().is_none() {
        return Err(format!("endpoint url `{}` must be http(s) with a host", endpoint.url));
    }
    if !(endpoint.threshold > 0.0 && endpoint.threshold < 1.0) {
        return Err(format!("threshold {} outside (0, 1)", endpoint.threshold));
    }
    Ok(ExternalClassifier { endpoint, transport })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoresResponse {
    scores: BTreeMap<String, f64>,
}

impl ExternalClassifier {
    fn request(record: &EcgRecord) -> Value {
        let samples: serde_json::Map<String, Value> = record
            .leads()
            .iter()
            .map(|l| (l.name.clone(), json!(l.samples)))
            .collect();
        json!({
            "record_id": record.record_id(),
            "lead_config": record.lead_config(),
            "samples_by_lead": samples,
            "sampling_rate_hz": record.sampling_rate_hz(),
        })
    }
}

impl Classifier for ExternalClassifier {
    fn id(&self) -> &str {
        &self.endpoint.url
    }

    fn classify(&self, record: &EcgRecord, registry: &[DiagnosticClass]) -> ClassificationOutput {
        let threshold = self.endpoint.threshold;
        let timeout = Duration::from_millis(self.endpoint.timeout_ms);
        let raw = match self.transport.post_json(&self.endpoint.url, &Self::request(record), timeout) {
            Ok(v) => v,
            Err(e) => return ClassificationOutput::invalid(threshold, e.reason()),
        };
        let Ok(resp) = serde_json::from_value::<ScoresResponse>(raw) else {
            return ClassificationOutput::invalid(threshold, "schema_violation");
        };
        let known = |c: &String| registry.iter().any(|r| &r.code == c);
        if resp.scores.keys().any(|c| !known(c)) || resp.scores.values().any(|p| !(0.0..=1.0).contains(p)) {
            return ClassificationOutput::invalid(threshold, "schema_violation");
        }
        let fired = resp
            .scores
            .iter()
            .filter(|(_, &p)| p >= threshold)
            .map(|(c, _)| (c.clone(), "external_model".to_string()))
            .collect();
        let out = ClassificationOutput::from_scores(resp.scores, registry, threshold, fired);
        match out.check(registry) {
            Ok(()) => out,
            Err(_) => ClassificationOutput::invalid(threshold, "schema_violation"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::class_registry;
    use crate::signal::{synthesize_ecg, LeadConfig};
    use crate::tool::ToolStatus;

    fn scores(p_pvc: f64) -> Value {
        let mut m = serde_json::Map::new();
        for c in class_registry(LeadConfig::LeadII) {
            let p = if c.code == "PVC" { p_pvc } else { 0.1 };
            m.insert(c.code, json!(p));
        }
        json!({ "scores": m })
    }

    fn run(transport: MockTransport) -> ClassificationOutput {
        let (rec, _) = synthesize_ecg(70.0, 4.0, 250.0, 0.0, 0).unwrap();
        let clf = attach_external_classifier(EndpointDescriptor::new("http://127.0.0.1:9/score"), Box::new(transport)).unwrap();
        clf.classify(&rec, &class_registry(LeadConfig::LeadII))
    }

    #[test]
    fn passes_scores_through() {
        let mock = MockTransport::fixed(scores(0.8));
        let out = run(mock.clone());
        assert_eq!(out.status, ToolStatus::Valid);
        assert_eq!(out.score("PVC"), 0.8);
        assert_eq!(out.predicted, vec!["PVC"]);
        let req = &mock.requests.lock().unwrap()[0];
        assert_eq!(req["lead_config"], "lead_ii");
        assert_eq!(req["sampling_rate_hz"], 250.0);
        assert_eq!(req["samples_by_lead"]["II"].as_array().unwrap().len(), 1000);
    }

    #[test]
    fn out_of_range_probability_is_schema_violation() {
        let out = run(MockTransport::fixed(scores(1.3)));
        assert_eq!(out.status, ToolStatus::Invalid("schema_violation".into()));
        assert!(out.predicted.is_empty());
    }

    #[test]
    fn missing_code_and_garbage_are_schema_violations() {
        let out = run(MockTransport::fixed(json!({"scores": {"SR": 0.9}})));
        assert_eq!(out.status, ToolStatus::Invalid("schema_violation".into()));
        let out = run(MockTransport::fixed(json!({"labels": []})));
        assert_eq!(out.status, ToolStatus::Invalid("schema_violation".into()));
    }

    #[test]
    fn timeout_and_connection_failures() {
        let out = run(MockTransport::new(|_| Err(TransportError::Timeout)));
        assert_eq!(out.status, ToolStatus::Invalid("timeout".into()));
        let out = run(MockTransport::new(|_| Err(TransportError::Connection("refused".into()))));
        assert_eq!(out.status, ToolStatus::Invalid("connection_failure".into()));
    }

    #[test]
    fn real_transport_reports_connection_failure() {
        // Port 9 (discard) is closed on loopback in the test environment.
        let out = UreqTransport.post_json("http://127.0.0.1:9/x", &json!({}), Duration::from_millis(500));
        assert!(matches!(out, Err(TransportError::Connection(_) | TransportError::Timeout)));
    }

    #[test]
    fn bad_descriptor_is_rejected() {
        let t = || Box::new(MockTransport::fixed(json!({})));
        assert!(attach_external_classifier(EndpointDescriptor::new("not a url"), t()).is_err());
        assert!(attach_external_classifier(EndpointDescriptor::new("ftp://host/x"), t()).is_err());
    }
}
