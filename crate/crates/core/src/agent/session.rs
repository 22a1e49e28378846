//! Agent sessions: the turn loop, tool dispatch and the response-fail
//! protocol.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendError};
use super::parse::{parse_agent_output, ParsedPayload};
use super::prompt::{BackendRequest, PromptError, RequestHeader, SYSTEM_PROMPT, TOKEN_BUDGET};
use crate::classify::{class_registry, classification_tool_call, Classifier, DiagnosticClass, RuleClassifier};
use crate::dialogue::{
    legal_next_actions, step, Action, AgentAction, Dialogue, DialogueState, DialogueTurn, GrammarMode, Scenario,
    Violation,
};
use crate::explain::{explanation_tool_call, ExplainConfig};
use crate::measure::measurement_tool_call;
use crate::signal::{EcgRecord, LeadConfig};
use crate::tool::{ToolCall, ToolKind, ToolOutput};

pub const DEFAULT_RETRIES: usize = 2;
pub const FALLBACK_FAIL_TEXT: &str = "Sorry, I could not produce a reliable answer to that. Could you rephrase your question?";
pub const FALLBACK_BYE_TEXT: &str = "Goodbye.";

/// Everything a tool call needs besides its arguments.
#[derive(Clone)]
pub struct ToolContext {
    pub record: Arc<EcgRecord>,
    pub registry: Vec<DiagnosticClass>,
    pub classifier: Arc<dyn Classifier>,
    pub explain: ExplainConfig,
}

impl ToolContext {
    /// Rule classifier and the default registry for the record's leads.
    pub fn with_defaults(record: EcgRecord) -> Self {
        let registry = class_registry(record.lead_config());
        ToolContext {
            record: Arc::new(record),
            registry,
            classifier: Arc::new(RuleClassifier::default()),
            explain: ExplainConfig::default(),
        }
    }
}

/// Routes a call to its tool. Explanation is refused on 12-lead records
/// before anything else is checked.
pub fn dispatch_tool(call: &ToolCall, ctx: &ToolContext) -> ToolOutput {
    let record = ctx.record.as_ref();
    match call.tool {
        ToolKind::Measurement => measurement_tool_call(record),
        ToolKind::Classification => classification_tool_call(record, ctx.classifier.as_ref(), &ctx.registry),
        ToolKind::Explanation => {
            if !record.lead_config().is_single_lead() {
                return ToolOutput::invalid(ToolKind::Explanation, "UnsupportedLeadConfig");
            }
            let code = match &call.class_code {
                Some(c) => c.clone(),
                None => {
                    let out = ctx.classifier.classify(record, &ctx.registry);
                    let picked = out.predicted.iter().find(|c| *c != "SR").or(out.predicted.first()).cloned();
                    match picked {
                        Some(c) => c,
                        None => return ToolOutput::invalid(ToolKind::Explanation, "no_active_class"),
                    }
                }
            };
            explanation_tool_call(record, &code, ctx.classifier.as_ref(), &ctx.registry, &ctx.explain)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub max_retries: usize,
    pub token_budget: usize,
    pub system_prompt: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_retries: DEFAULT_RETRIES,
            token_budget: TOKEN_BUDGET,
            system_prompt: SYSTEM_PROMPT.to_string(),
        }
    }
}

/// One backend call and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub request: BackendRequest,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

/// Backend exchanges behind one emitted agent turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub turn_index: usize,
    pub action: AgentAction,
    pub thought: String,
    pub attempts: Vec<Attempt>,
    pub fallback: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("session is over")]
    Terminal,
    #[error("user turn rejected: {0}")]
    IllegalUserTurn(Violation),
    #[error("not a user turn")]
    NotUserTurn,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("stored transcript does not replay: {0}")]
    Replay(Violation),
}

pub struct Session {
    dialogue: Dialogue,
    state: DialogueState,
    tools: ToolContext,
    config: SessionConfig,
    trace: Vec<TraceEntry>,
}

impl Session {
    pub fn new(dialogue_id: impl Into<String>, ecg_record_ref: impl Into<String>, tools: ToolContext, config: SessionConfig) -> Self {
        let lead_config = tools.record.lead_config();
        Session {
            dialogue: Dialogue {
                dialogue_id: dialogue_id.into(),
                scenario: None,
                lead_config,
                ecg_record_ref: ecg_record_ref.into(),
                turns: Vec::new(),
            },
            state: DialogueState::new(lead_config, GrammarMode::Runtime),
            tools,
            config,
            trace: Vec::new(),
        }
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.dialogue.scenario = Some(scenario);
        self
    }

    /// Rebuilds a session from a stored transcript.
    pub fn resume(dialogue: Dialogue, tools: ToolContext, config: SessionConfig) -> Result<Self, AgentError> {
        let state = dialogue.replay(GrammarMode::Runtime).map_err(AgentError::Replay)?;
        Ok(Session {
            dialogue,
            state,
            tools,
            config,
            trace: Vec::new(),
        })
    }

    pub fn transcript(&self) -> &Dialogue {
        &self.dialogue
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }

    pub fn lead_config(&self) -> LeadConfig {
        self.dialogue.lead_config
    }

    pub fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn tools(&self) -> &ToolContext {
        &self.tools
    }

    fn header(&self) -> RequestHeader {
        RequestHeader {
            lead_config: self.dialogue.lead_config,
            ecg_record_ref: self.dialogue.ecg_record_ref.clone(),
            scenario: self.dialogue.scenario.clone(),
        }
    }

    /// Applies a user turn and produces the agent's reply turns. On error
    /// the session is left unchanged.
    pub fn run_turn(&mut self, backend: &mut dyn Backend, user_turn: DialogueTurn) -> Result<Vec<DialogueTurn>, AgentError> {
        if self.state.is_terminal() {
            return Err(AgentError::Terminal);
        }
        if !matches!(user_turn, DialogueTurn::User { .. }) {
            return Err(AgentError::NotUserTurn);
        }
        let mut state = step(&self.state, &user_turn).map_err(AgentError::IllegalUserTurn)?;
        let mut turns = self.dialogue.turns.clone();
        turns.push(user_turn);
        let first = turns.len();
        let mut trace = Vec::new();

        while !state.awaits_user() && !state.is_terminal() {
            let (turn, entry) = self.agent_turn(backend, &state, &turns)?;
            state = step(&state, &turn).expect("agent turns are checked before they are emitted");
            trace.push(entry);
            turns.push(turn);
        }

        let emitted = turns[first..].to_vec();
        self.dialogue.turns = turns;
        self.state = state;
        self.trace.extend(trace);
        Ok(emitted)
    }

    fn agent_turn(
        &self,
        backend: &mut dyn Backend,
        state: &DialogueState,
        turns: &[DialogueTurn],
    ) -> Result<(DialogueTurn, TraceEntry), AgentError> {
        let legal = legal_next_actions(state);
        let mut attempts = Vec::new();
        let mut feedback = None;
        for _ in 0..=self.config.max_retries {
            let request = BackendRequest::build(
                &self.config.system_prompt,
                self.header(),
                turns,
                feedback.take(),
                self.config.token_budget,
            )?;
            let raw = backend.complete(&request)?;
            let verdict = parse_agent_output(&raw).map_err(|e| e.to_string()).and_then(|out| {
                if legal.contains(&Action::Agent(out.action)) {
                    Ok(out)
                } else {
                    let mut allowed: Vec<_> = legal.iter().map(|a| a.to_string()).collect();
                    allowed.sort();
                    Err(format!("{} is not allowed here; allowed: {}", out.action, allowed.join(", ")))
                }
            });
            match verdict {
                Ok(out) => {
                    attempts.push(Attempt { request, raw, rejected: None });
                    let turn = match out.payload {
                        ParsedPayload::ToolInput(call) => {
                            let output = dispatch_tool(&call, &self.tools);
                            DialogueTurn::tool(call, out.thought.clone(), output)
                        }
                        ParsedPayload::Response(text) => DialogueTurn::agent(out.action, out.thought.clone(), text),
                    };
                    let entry = TraceEntry {
                        turn_index: turns.len(),
                        action: out.action,
                        thought: out.thought,
                        attempts,
                        fallback: false,
                    };
                    return Ok((turn, entry));
                }
                Err(reason) => {
                    feedback = Some(reason.clone());
                    attempts.push(Attempt {
                        request,
                        raw,
                        rejected: Some(reason),
                    });
                }
            }
        }
        let (action, text) = if legal.contains(&Action::Agent(AgentAction::ResponseFail)) {
            (AgentAction::ResponseFail, FALLBACK_FAIL_TEXT)
        } else {
            (AgentAction::SystemBye, FALLBACK_BYE_TEXT)
        };
        let thought = format!("no acceptable backend output after {} attempts", attempts.len());
        let entry = TraceEntry {
            turn_index: turns.len(),
            action,
            thought: thought.clone(),
            attempts,
            fallback: true,
        };
        Ok((DialogueTurn::agent(action, thought, text), entry))
    }
}
