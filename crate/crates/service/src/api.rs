//! `/v1` routes.
//!
//! | method | path | body | answer |
//! |---|---|---|---|
//! | GET | /v1/health | | `{status, name, version, build}` |
//! | POST | /v1/sessions | record fields, `scenario?` | 201 session view |
//! | GET | /v1/sessions | | list of session views |
//! | GET | /v1/sessions/{id} | | session view with `transcript` |
//! | POST | /v1/sessions/{id}/messages | `{action, content}` | agent turns; 409 busy, 410 over |
//! | GET | /v1/sessions/{id}/trace | | backend exchanges; 404 unless `debug_trace` |
//! | GET | /v1/sessions/{id}/record | | samples by lead |
//! | POST | /v1/tools/{tool} | record fields, `class_code?` | tool output |
//! | POST | /v1/eval | eval request | 202 job |
//! | GET | /v1/eval/{job_id} | | job with `report` once done |
//!
//! Record fields: `lead_config?` and exactly one of `record_ref` (a
//! `synth:` reference), `record_id` (a file stem in `records_dir`) or `csv`
//! (text, with `sampling_rate_hz`).

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use ecg_agent::agent::dispatch_tool;
use ecg_agent::classify::filter_registry;
use ecg_agent::dialogue::{DialogueTurn, Scenario, UserAction};
use ecg_agent::signal::LeadConfig;
use ecg_agent::tool::{ToolCall, ToolKind, ToolOutput};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::app::{AppState, JobView, SessionView, TurnReply};
use crate::error::{ApiError, ApiJson};
use crate::records::{resolve, RecordInput};
use crate::runner::EvalRequest;

type App = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ApiError>;

pub const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/sessions/{id}/trace", get(get_trace))
        .route("/v1/sessions/{id}/record", get(get_record))
        .route("/v1/tools/{tool}", post(run_tool))
        .route("/v1/eval", post(submit_eval))
        .route("/v1/eval/{job_id}", get(get_job))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(app)
}

async fn health() -> Json<Value> {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "build": option_env!("ECG_AGENT_BUILD").unwrap_or("dev"),
    }))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    lead_config: Option<LeadConfig>,
    #[serde(default)]
    record_ref: Option<String>,
    #[serde(default)]
    record_id: Option<String>,
    #[serde(default)]
    csv: Option<String>,
    #[serde(default)]
    sampling_rate_hz: Option<f64>,
    #[serde(default)]
    scenario: Option<Scenario>,
}

async fn create_session(State(app): App, ApiJson(body): ApiJson<CreateSession>) -> ApiResult<(StatusCode, Json<Arc<SessionView>>)> {
    let input = RecordInput {
        lead_config: body.lead_config,
        record_ref: body.record_ref,
        record_id: body.record_id,
        csv: body.csv,
        sampling_rate_hz: body.sampling_rate_hz,
    };
    let view = blocking(move || app.create_session(&input, body.scenario)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list_sessions(State(app): App) -> Json<Vec<Value>> {
    let list = app
        .session_views()
        .iter()
        .map(|v| {
            json!({
                "session_id": v.session_id,
                "lead_config": v.lead_config,
                "created_at": v.created_at,
                "updated_at": v.updated_at,
                "terminal": v.terminal,
                "turns": v.transcript.turns.len(),
            })
        })
        .collect();
    Json(list)
}

async fn get_session(State(app): App, Path(id): Path<String>) -> ApiResult<Json<Arc<SessionView>>> {
    Ok(Json(app.session(&id)?.view()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Message {
    action: UserAction,
    #[serde(default)]
    content: String,
}

async fn post_message(State(app): App, Path(id): Path<String>, ApiJson(body): ApiJson<Message>) -> ApiResult<Json<TurnReply>> {
    let handle = app.session(&id)?;
    let live = handle.live.clone().try_lock_owned().map_err(|_| {
        ApiError::new(StatusCode::CONFLICT, "turn_in_flight", format!("session `{id}` is already handling a message"))
    })?;
    if live.session.is_terminal() {
        return Err(ApiError::new(StatusCode::GONE, "session_terminal", format!("session `{id}` has ended")));
    }
    let user = DialogueTurn::user(body.action, body.content);
    let reply = blocking(move || {
        let mut live = live;
        app.run_turn(&handle, &mut live, user)
    })
    .await?;
    Ok(Json(reply))
}

async fn get_trace(State(app): App, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    if !app.config.server.debug_trace {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "trace_disabled", "start the service with debug_trace enabled"));
    }
    let handle = app.session(&id)?;
    Ok(Json(json!({ "session_id": id, "trace": handle.trace() })))
}

async fn get_record(State(app): App, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let r = app.session(&id)?.record.clone();
    let leads: Vec<Value> = r.leads().iter().map(|l| json!({ "name": l.name, "samples": l.samples })).collect();
    Ok(Json(json!({
        "record_id": r.record_id(),
        "lead_config": r.lead_config(),
        "sampling_rate_hz": r.sampling_rate_hz(),
        "duration_s": r.duration_s(),
        "leads": leads,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolRequest {
    #[serde(default)]
    lead_config: Option<LeadConfig>,
    #[serde(default)]
    record_ref: Option<String>,
    #[serde(default)]
    record_id: Option<String>,
    #[serde(default)]
    csv: Option<String>,
    #[serde(default)]
    sampling_rate_hz: Option<f64>,
    #[serde(default)]
    class_code: Option<String>,
}

async fn run_tool(State(app): App, Path(tool): Path<String>, ApiJson(body): ApiJson<ToolRequest>) -> ApiResult<Json<ToolOutput>> {
    let kind: ToolKind = serde_json::from_value(Value::String(tool.clone())).map_err(|_| ApiError::not_found("tool", &tool))?;
    if body.class_code.is_some() && kind != ToolKind::Explanation {
        return Err(ApiError::bad_request("invalid_request", "class_code applies to explanation only"));
    }
    let input = RecordInput {
        lead_config: body.lead_config,
        record_ref: body.record_ref,
        record_id: body.record_id,
        csv: body.csv,
        sampling_rate_hz: body.sampling_rate_hz,
    };
    let call = ToolCall { tool: kind, class_code: body.class_code };
    let out = blocking(move || {
        let scratch = app.scratch_dir().join("tools");
        let name = format!("t-{}", uuid::Uuid::new_v4().simple());
        let resolved = resolve(&input, app.config.server.records_dir.as_deref(), &scratch, &name)?;
        for ext in ["csv", "meta.json"] {
            let _ = std::fs::remove_file(scratch.join(format!("{name}.{ext}")));
        }
        let registry = filter_registry(&app.config.registry().map_err(|e| ApiError::internal(e.to_string()))?, resolved.record.lead_config());
        let ctx = ecg_agent::agent::ToolContext { registry, ..ecg_agent::agent::ToolContext::with_defaults(resolved.record) };
        Ok(dispatch_tool(&call, &ctx))
    })
    .await?;
    Ok(Json(out))
}

async fn submit_eval(State(app): App, ApiJson(body): ApiJson<EvalRequest>) -> ApiResult<(StatusCode, Json<JobView>)> {
    if body.dataset.is_some() == body.dialogues.is_some() {
        return Err(ApiError::bad_request("invalid_request", "give exactly one of dataset, dialogues"));
    }
    Ok((StatusCode::ACCEPTED, Json(app.submit_eval(body))))
}

async fn get_job(State(app): App, Path(job_id): Path<String>) -> ApiResult<Json<JobView>> {
    Ok(Json(app.job(&job_id)?))
}
