//! Language-model backends. A backend maps a request to raw text in the
//! line-tagged output format.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::parse::{format_agent_output, ParsedPayload};
use super::prompt::BackendRequest;
use crate::classify::{Transport, TransportError, UreqTransport};
use crate::dialogue::{AgentPayload, Dialogue, DialogueTurn};

pub const ENV_URL: &str = "ECG_AGENT_BACKEND_URL";
pub const ENV_MODEL: &str = "ECG_AGENT_BACKEND_MODEL";
pub const ENV_API_KEY: &str = "ECG_AGENT_BACKEND_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("script exhausted after {0} outputs")]
    ScriptExhausted(usize),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend response unusable: {0}")]
    BadResponse(String),
    #[error("backend not configured: {0}")]
    NotConfigured(String),
}

pub trait Backend: Send {
    fn id(&self) -> &str;
    fn complete(&mut self, request: &BackendRequest) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&mut self, request: &BackendRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Returns canned outputs in order and records every request.
pub struct ScriptedBackend {
    outputs: VecDeque<String>,
    served: usize,
    requests: Arc<Mutex<Vec<BackendRequest>>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(outputs: impl IntoIterator<Item = S>) -> Self {
        ScriptedBackend {
            outputs: outputs.into_iter().map(Into::into).collect(),
            served: 0,
            requests: Arc::default(),
        }
    }

    /// Shared handle to the recorded requests.
    pub fn recorder(&self) -> Arc<Mutex<Vec<BackendRequest>>> {
        Arc::clone(&self.requests)
    }

    pub fn requests(&self) -> Vec<BackendRequest> {
        self.requests.lock().expect("recorder lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.outputs.len()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&mut self, request: &BackendRequest) -> Result<String, BackendError> {
        self.requests.lock().expect("recorder lock").push(request.clone());
        let out = self.outputs.pop_front().ok_or(BackendError::ScriptExhausted(self.served))?;
        self.served += 1;
        Ok(out)
    }
}

/// Raw output text that reproduces an agent turn.
pub fn turn_to_output(turn: &DialogueTurn) -> Option<String> {
    let DialogueTurn::Agent { action, thought, payload } = turn else {
        return None;
    };
    let payload = match payload {
        AgentPayload::Content(c) => ParsedPayload::Response(c.clone()),
        AgentPayload::Tool { call, .. } => ParsedPayload::ToolInput(call.clone()),
    };
    Some(format_agent_output(*action, thought, &payload))
}

/// Replays the agent turns of a reference dialogue, keyed by turn position.
pub struct GtReplayBackend {
    dialogue: Dialogue,
}

impl GtReplayBackend {
    pub fn new(dialogue: Dialogue) -> Self {
        GtReplayBackend { dialogue }
    }
}

impl Backend for GtReplayBackend {
    fn id(&self) -> &str {
        "gt-replay"
    }

    fn complete(&mut self, request: &BackendRequest) -> Result<String, BackendError> {
        self.dialogue
            .turns
            .get(request.turn_index)
            .and_then(turn_to_output)
            .ok_or_else(|| {
                BackendError::BadResponse(format!(
                    "reference dialogue {} has no agent turn at position {}",
                    self.dialogue.dialogue_id, request.turn_index
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatBackendConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_tokens: u32,
}

impl ChatBackendConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        ChatBackendConfig {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_tokens: 512,
        }
    }

    /// Reads the endpoint, model and key from the environment.
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let url = var(ENV_URL).ok_or_else(|| BackendError::NotConfigured(format!("{ENV_URL} is not set")))?;
        let model = var(ENV_MODEL).unwrap_or_else(|| "default".into());
        Ok(ChatBackendConfig {
            api_key: var(ENV_API_KEY),
            ..ChatBackendConfig::new(url, model)
        })
    }
}

/// Chat-completion client: `{model, messages: [system, user]}` in,
/// `choices[0].message.content` out.
pub struct ChatBackend {
    config: ChatBackendConfig,
    transport: Box<dyn Transport>,
    id: String,
}

impl ChatBackend {
    pub fn new(config: ChatBackendConfig) -> Self {
        ChatBackend::with_transport(config, Box::new(UreqTransport))
    }

    pub fn with_transport(config: ChatBackendConfig, transport: Box<dyn Transport>) -> Self {
        let id = format!("chat:{}", config.model);
        ChatBackend { config, transport, id }
    }

    pub fn request_body(&self, request: &BackendRequest) -> Value {
        json!({
            "model": self.config.model,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
            "messages": [
                {"role": "system", "content": request.system_message()},
                {"role": "user", "content": request.user_message()},
            ],
        })
    }
}

/// Sends one chat request and extracts the reply text.
pub(crate) fn chat_complete(
    transport: &dyn Transport,
    config: &ChatBackendConfig,
    body: &Value,
) -> Result<String, BackendError> {
    let headers: Vec<(String, String)> = config
        .api_key
        .iter()
        .map(|k| ("Authorization".to_string(), format!("Bearer {k}")))
        .collect();
    let resp = transport
        .post_json_with_headers(&config.url, &headers, body, config.timeout)
        .map_err(|e| match e {
            TransportError::Decode(m) => BackendError::BadResponse(m),
            other => BackendError::Unreachable(other.to_string()),
        })?;
    resp.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))
}

impl Backend for ChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&mut self, request: &BackendRequest) -> Result<String, BackendError> {
        let body = self.request_body(request);
        chat_complete(self.transport.as_ref(), &self.config, &body)
    }
}
