//! The agent loop: prompt a backend, parse its output, dispatch tools and
//! keep every emitted turn legal.

mod backend;
mod parse;
mod policy;
mod prompt;
mod session;

pub use backend::{
    turn_to_output, Backend, BackendError, ChatBackend, ChatBackendConfig, GtReplayBackend, ScriptedBackend, ENV_API_KEY,
    ENV_MODEL, ENV_URL,
};
pub(crate) use backend::chat_complete;
pub use parse::{format_agent_output, parse_agent_output, ParseError, ParsedOutput, ParsedPayload};
pub use policy::{
    compose_classification, compose_explanation, compose_failure, compose_follow_up, compose_measurement,
    compose_response, mentioned_codes, route_inquiry, RulePolicyBackend, DIRECT_RESPONSE,
};
pub use prompt::{estimate_tokens, BackendRequest, HistoryEntry, PromptError, RequestHeader, SYSTEM_PROMPT, TOKEN_BUDGET};
pub use session::{
    dispatch_tool, AgentError, Attempt, Session, SessionConfig, ToolContext, TraceEntry, DEFAULT_RETRIES,
    FALLBACK_BYE_TEXT, FALLBACK_FAIL_TEXT,
};
