//! Live sessions, their persistence and evaluation jobs.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use ecg_agent::agent::{AgentError, Backend, ChatBackend, RulePolicyBackend, Session, SessionConfig, ToolContext, TraceEntry};
use ecg_agent::classify::{filter_registry, DiagnosticClass};
use ecg_agent::dialogue::{legal_next_actions, Action, Dialogue, DialogueTurn, Scenario};
use ecg_agent::eval::EvalReport;
use ecg_agent::mtd::resolve_record_ref;
use ecg_agent::signal::{EcgRecord, LoadOptions};
use serde::Serialize;
use tokio::sync::{Mutex, Semaphore};

use crate::config::{BackendKind, Config, ConfigError};
use crate::records::{resolve, RecordInput};
use crate::runner::{run_eval, EvalRequest};
use crate::store::{SessionHeader, SessionStore, StoreError, StoredSession, TurnEntry};
use crate::ApiError;

/// Makes one backend per session.
pub type BackendFactory = Arc<dyn Fn() -> Box<dyn Backend> + Send + Sync>;

pub fn backend_factory(config: &Config) -> Result<BackendFactory, ConfigError> {
    Ok(match config.backend.kind {
        BackendKind::RulePolicy => Arc::new(|| Box::new(RulePolicyBackend) as Box<dyn Backend>),
        BackendKind::Chat => {
            let chat = config.chat_backend()?;
            Arc::new(move || Box::new(ChatBackend::new(chat.clone())) as Box<dyn Backend>)
        }
    })
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("session {id}: {message}")]
    Session { id: String, message: String },
}

pub struct LiveSession {
    pub session: Session,
    pub backend: Box<dyn Backend>,
}

/// What readers see without waiting for a turn in flight.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub lead_config: ecg_agent::signal::LeadConfig,
    pub ecg_record_ref: String,
    pub created_at: String,
    pub updated_at: String,
    pub terminal: bool,
    pub next_user_actions: Vec<Action>,
    pub transcript: Dialogue,
}

pub struct SessionHandle {
    pub live: Arc<Mutex<LiveSession>>,
    pub record: Arc<EcgRecord>,
    view: RwLock<Arc<SessionView>>,
    trace: RwLock<Vec<TraceEntry>>,
}

impl SessionHandle {
    pub fn view(&self) -> Arc<SessionView> {
        self.view.read().unwrap().clone()
    }

    pub fn trace(&self) -> Vec<TraceEntry> {
        self.trace.read().unwrap().clone()
    }
}

fn make_view(header: &SessionHeader, updated_at: &str, session: &Session) -> SessionView {
    let next_user_actions = if session.is_terminal() {
        Vec::new()
    } else {
        legal_next_actions(session.state()).into_iter().filter(|a| matches!(a, Action::User(_))).collect()
    };
    SessionView {
        session_id: header.session_id.clone(),
        lead_config: header.lead_config,
        ecg_record_ref: header.ecg_record_ref.clone(),
        created_at: header.created_at.clone(),
        updated_at: updated_at.to_string(),
        terminal: session.is_terminal(),
        next_user_actions,
        transcript: session.transcript().clone(),
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum JobState {
    Queued,
    Running,
    Done { report: Box<EvalReport> },
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub job_id: String,
    pub submitted_at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(flatten)]
    pub state: JobState,
}

/// Result of one user message.
#[derive(Debug, Clone, Serialize)]
pub struct TurnReply {
    /// Agent turns in order, tool turns with their outputs.
    pub turns: Vec<DialogueTurn>,
    pub terminal: bool,
    pub next_user_actions: Vec<Action>,
}

pub struct AppState {
    pub config: Config,
    store: SessionStore,
    registry: Vec<DiagnosticClass>,
    backends: BackendFactory,
    session_config: SessionConfig,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    jobs: RwLock<HashMap<String, JobView>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    /// Opens the store and replays every persisted session.
    pub fn open(config: Config, backends: BackendFactory) -> Result<Arc<Self>, StartupError> {
        let store = SessionStore::open(&config.server.data_dir)?;
        let registry = config.registry()?;
        let app = AppState {
            store,
            registry,
            backends,
            session_config: config.session_config(),
            sessions: RwLock::new(HashMap::new()),
            jobs: RwLock::new(HashMap::new()),
            workers: Arc::new(Semaphore::new(config.server.eval_workers)),
            config,
        };
        for stored in app.store.load_all()? {
            let id = stored.header.session_id.clone();
            let handle = app.restore(stored).map_err(|message| StartupError::Session { id: id.clone(), message })?;
            app.sessions.write().unwrap().insert(id, Arc::new(handle));
        }
        Ok(Arc::new(app))
    }

    fn tools(&self, record: EcgRecord) -> ToolContext {
        let registry = filter_registry(&self.registry, record.lead_config());
        ToolContext { registry, ..ToolContext::with_defaults(record) }
    }

    fn restore(&self, stored: StoredSession) -> Result<SessionHandle, String> {
        let record = resolve_record_ref(&stored.header.ecg_record_ref, &LoadOptions::default()).map_err(|e| e.to_string())?;
        let tools = self.tools(record);
        let record = tools.record.clone();
        let session = Session::resume(stored.dialogue(), tools, self.session_config.clone()).map_err(|e| e.to_string())?;
        let view = make_view(&stored.header, stored.updated_at(), &session);
        Ok(SessionHandle {
            live: Arc::new(Mutex::new(LiveSession { session, backend: (self.backends)() })),
            record,
            view: RwLock::new(Arc::new(view)),
            trace: RwLock::new(Vec::new()),
        })
    }

    pub fn scratch_dir(&self) -> PathBuf {
        self.config.server.data_dir.join("records")
    }

    /// Blocking: loads the record and writes the session header.
    pub fn create_session(&self, input: &RecordInput, scenario: Option<Scenario>) -> Result<Arc<SessionView>, ApiError> {
        let id = format!("s-{}", uuid::Uuid::new_v4().simple());
        let resolved = resolve(input, self.config.server.records_dir.as_deref(), &self.scratch_dir(), &id)?;
        let header = SessionHeader {
            session_id: id.clone(),
            lead_config: resolved.record.lead_config(),
            ecg_record_ref: resolved.record_ref.clone(),
            scenario: scenario.clone(),
            created_at: now(),
        };
        self.store.create(&header).map_err(|e| ApiError::internal(e.to_string()))?;
        let tools = self.tools(resolved.record);
        let record = tools.record.clone();
        let mut session = Session::new(id.clone(), resolved.record_ref, tools, self.session_config.clone());
        if let Some(s) = scenario {
            session = session.with_scenario(s);
        }
        let view = Arc::new(make_view(&header, &header.created_at, &session));
        let handle = SessionHandle {
            live: Arc::new(Mutex::new(LiveSession { session, backend: (self.backends)() })),
            record,
            view: RwLock::new(view.clone()),
            trace: RwLock::new(Vec::new()),
        };
        self.sessions.write().unwrap().insert(id, Arc::new(handle));
        Ok(view)
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn session_views(&self) -> Vec<Arc<SessionView>> {
        let mut v: Vec<_> = self.sessions.read().unwrap().values().map(|h| h.view()).collect();
        v.sort_by(|a, b| (&a.created_at, &a.session_id).cmp(&(&b.created_at, &b.session_id)));
        v
    }

    /// Blocking: runs one user turn while the caller holds the session lock,
    /// then appends every new turn to the log.
    pub fn run_turn(&self, handle: &SessionHandle, live: &mut LiveSession, user: DialogueTurn) -> Result<TurnReply, ApiError> {
        let before = live.session.transcript().turns.len();
        let LiveSession { session, backend } = live;
        let outcome = session.run_turn(backend.as_mut(), user);
        let new = &session.transcript().turns[before..];
        let view = handle.view();
        let mut updated_at = view.updated_at.clone();
        if !new.is_empty() {
            let at = now();
            let entries: Vec<TurnEntry> = new.iter().map(|t| TurnEntry { at: at.clone(), turn: t.clone() }).collect();
            self.store.append(&view.session_id, &entries).map_err(|e| ApiError::internal(e.to_string()))?;
            updated_at = at;
        }
        let header = SessionHeader {
            session_id: view.session_id.clone(),
            lead_config: view.lead_config,
            ecg_record_ref: view.ecg_record_ref.clone(),
            scenario: session.transcript().scenario.clone(),
            created_at: view.created_at.clone(),
        };
        let fresh = Arc::new(make_view(&header, &updated_at, session));
        *handle.view.write().unwrap() = fresh.clone();
        *handle.trace.write().unwrap() = session.trace().to_vec();
        let turns = outcome.map_err(agent_error)?;
        Ok(TurnReply { turns, terminal: fresh.terminal, next_user_actions: fresh.next_user_actions.clone() })
    }

    pub fn submit_eval(self: &Arc<Self>, request: EvalRequest) -> JobView {
        let job_id = format!("j-{}", uuid::Uuid::new_v4().simple());
        let job = JobView { job_id: job_id.clone(), submitted_at: now(), finished_at: None, state: JobState::Queued };
        self.jobs.write().unwrap().insert(job_id.clone(), job.clone());
        let app = self.clone();
        tokio::spawn(async move {
            let _permit = app.workers.clone().acquire_owned().await.expect("worker pool is never closed");
            app.set_job(&job_id, JobState::Running, false);
            let worker = app.clone();
            let result = tokio::task::spawn_blocking(move || run_eval(&request, &worker.config)).await;
            let state = match result {
                Ok(Ok(report)) => JobState::Done { report: Box::new(report) },
                Ok(Err(e)) => JobState::Failed { error: e.to_string() },
                Err(e) => JobState::Failed { error: format!("evaluation panicked: {e}") },
            };
            app.set_job(&job_id, state, true);
        });
        job
    }

    fn set_job(&self, id: &str, state: JobState, finished: bool) {
        if let Some(j) = self.jobs.write().unwrap().get_mut(id) {
            j.state = state;
            if finished {
                j.finished_at = Some(now());
            }
        }
    }

    pub fn job(&self, id: &str) -> Result<JobView, ApiError> {
        self.jobs.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("evaluation job", id))
    }
}

pub fn agent_error(e: AgentError) -> ApiError {
    use axum::http::StatusCode;
    let msg = e.to_string();
    match e {
        AgentError::Terminal => ApiError::new(StatusCode::GONE, "session_terminal", msg),
        AgentError::IllegalUserTurn(v) => ApiError::bad_request("illegal_action", msg).with_detail(v.to_string()),
        AgentError::NotUserTurn => ApiError::bad_request("illegal_action", msg),
        AgentError::Backend(_) => ApiError::new(StatusCode::BAD_GATEWAY, "backend_error", msg),
        AgentError::Prompt(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "prompt_too_large", msg),
        AgentError::Replay(_) => ApiError::internal(msg),
    }
}
