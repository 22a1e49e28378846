//! Service configuration: one TOML file, secrets from the environment.
//!
//! ```toml
//! [server]
//! bind = "127.0.0.1"
//! port = 8080
//! data_dir = "ecg-agent-data"
//! records_dir = "records"      # optional, for `record_id` lookups
//! debug_trace = false
//! eval_workers = 2
//!
//! [backend]
//! kind = "rule_policy"         # or "chat"
//! url = "http://localhost:8000/v1/chat/completions"
//! model = "ecg-agent"
//! timeout_s = 60
//! max_tokens = 512
//! max_retries = 2
//!
//! [judge]
//! kind = "rule"                # or "llm"
//! min_interval_ms = 0
//!
//! [tolerance]
//! relative = 0.05
//! absolute_ms = 5.0
//!
//! registry = "classes.json"    # optional class registry
//! ```
//!
//! Unknown keys are errors. API keys are never read from the file: they come
//! from `ECG_AGENT_BACKEND_API_KEY` and `ECG_AGENT_JUDGE_API_KEY`. The
//! backend and judge URL and model can also be overridden from the
//! environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use ecg_agent::agent::{ChatBackendConfig, SessionConfig, ENV_API_KEY, ENV_MODEL, ENV_URL};
use ecg_agent::classify::{default_registry, load_registry, DiagnosticClass};
use ecg_agent::eval::Tolerance;
use serde::{Deserialize, Serialize};

pub const ENV_JUDGE_URL: &str = "ECG_AGENT_JUDGE_URL";
pub const ENV_JUDGE_MODEL: &str = "ECG_AGENT_JUDGE_MODEL";
pub const ENV_JUDGE_API_KEY: &str = "ECG_AGENT_JUDGE_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub records_dir: Option<PathBuf>,
    /// Exposes `GET /v1/sessions/{id}/trace`.
    pub debug_trace: bool,
    pub eval_workers: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("ecg-agent-data"),
            records_dir: None,
            debug_trace: false,
            eval_workers: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    RulePolicy,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub url: Option<String>,
    pub model: Option<String>,
    pub timeout_s: u64,
    pub max_tokens: u32,
    pub max_retries: usize,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::RulePolicy,
            url: None,
            model: None,
            timeout_s: 60,
            max_tokens: 512,
            max_retries: ecg_agent::agent::DEFAULT_RETRIES,
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    #[default]
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeConfig {
    pub kind: JudgeKind,
    pub url: Option<String>,
    pub model: Option<String>,
    pub timeout_s: u64,
    pub min_interval_ms: u64,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig { kind: JudgeKind::Rule, url: None, model: None, timeout_s: 60, min_interval_ms: 0, api_key: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub server: ServerConfig,
    pub backend: BackendConfig,
    pub judge: JudgeConfig,
    pub tolerance: Tolerance,
    pub registry: Option<PathBuf>,
}

fn chat_config(url: &Option<String>, model: &Option<String>, key: &Option<String>, timeout_s: u64, what: &str) -> Result<ChatBackendConfig, ConfigError> {
    let url = url.clone().ok_or_else(|| ConfigError::Invalid(format!("{what} needs a url")))?;
    let mut c = ChatBackendConfig::new(url, model.clone().unwrap_or_else(|| "default".into()));
    c.api_key = key.clone();
    c.timeout = Duration::from_secs(timeout_s);
    Ok(c)
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: Config =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (defaults when `None`) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
                Config::parse(&text, &p.display().to_string())?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok().filter(|v| !v.is_empty()));
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(v) = var(ENV_URL) {
            self.backend.url = Some(v);
        }
        if let Some(v) = var(ENV_MODEL) {
            self.backend.model = Some(v);
        }
        self.backend.api_key = var(ENV_API_KEY);
        if let Some(v) = var(ENV_JUDGE_URL) {
            self.judge.url = Some(v);
        }
        if let Some(v) = var(ENV_JUDGE_MODEL) {
            self.judge.model = Some(v);
        }
        self.judge.api_key = var(ENV_JUDGE_API_KEY);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.server.eval_workers == 0 {
            return Err(ConfigError::Invalid("server.eval_workers must be at least 1".into()));
        }
        let t = &self.tolerance;
        if !(t.relative >= 0.0 && t.absolute_ms >= 0.0) {
            return Err(ConfigError::Invalid("tolerances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig { max_retries: self.backend.max_retries, ..SessionConfig::default() }
    }

    pub fn chat_backend(&self) -> Result<ChatBackendConfig, ConfigError> {
        let b = &self.backend;
        let mut c = chat_config(&b.url, &b.model, &b.api_key, b.timeout_s, "backend")?;
        c.max_tokens = b.max_tokens;
        Ok(c)
    }

    pub fn chat_judge(&self) -> Result<ChatBackendConfig, ConfigError> {
        let j = &self.judge;
        chat_config(&j.url, &j.model, &j.api_key, j.timeout_s, "judge")
    }

    pub fn registry(&self) -> Result<Vec<DiagnosticClass>, ConfigError> {
        match &self.registry {
            Some(p) => load_registry(p).map_err(|e| ConfigError::Invalid(format!("registry {}: {e}", p.display()))),
            None => Ok(default_registry()),
        }
    }
}
