//! Dialogue generation. A plan fixes the action skeleton, the record and
//! every tool output; a generator only supplies the surface text.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::records::{resolve_record_ref, RecordKind, SynthSpec};
use super::templates::{self, Intent};
use crate::agent::{
    chat_complete, compose_failure, compose_follow_up, compose_response, dispatch_tool, ChatBackendConfig,
    ToolContext,
};
use crate::classify::{Transport, UreqTransport};
use crate::dialogue::{
    action_sequence, Action, AgentAction, AgentPayload, Dialogue, DialogueTurn, Scenario, UserAction,
};
use crate::signal::{LeadConfig, LoadOptions};
use crate::tool::{ToolCall, ToolKind, ToolOutput};

pub const HR_POOL: [u32; 3] = [62, 74, 88];
pub const SEED_POOL: [u64; 2] = [1, 2];

/// Classes tried, in order, when an explanation must fail.
const INACTIVE_CANDIDATES: [&str; 4] = ["AFIB", "STD", "PAC", "PVC"];

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("unknown action sequence `{0}`")]
    UnknownSequence(String),
    #[error("sequence `{0}` cannot be used with {1}")]
    UnsupportedSequence(String, LeadConfig),
    #[error("no record in the pool gives the tool statuses sequence `{0}` needs")]
    NoRecordFits(String),
    #[error("record: {0}")]
    Record(String),
    #[error("generator backend: {0}")]
    Backend(String),
}

/// Shared record and tool-output cache. Keys are record references.
#[derive(Default, Clone)]
pub struct ToolCache {
    contexts: Arc<Mutex<HashMap<String, ToolContext>>>,
    outputs: Arc<Mutex<HashMap<(String, ToolCall), ToolOutput>>>,
}

impl ToolCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn context(&self, record_ref: &str) -> Result<ToolContext, GenerateError> {
        if let Some(ctx) = self.contexts.lock().unwrap().get(record_ref) {
            return Ok(ctx.clone());
        }
        let record = resolve_record_ref(record_ref, &LoadOptions::default())
            .map_err(|e| GenerateError::Record(e.to_string()))?;
        let ctx = ToolContext::with_defaults(record);
        self.contexts.lock().unwrap().insert(record_ref.to_string(), ctx.clone());
        Ok(ctx)
    }

    pub fn call(&self, record_ref: &str, call: &ToolCall) -> Result<ToolOutput, GenerateError> {
        let key = (record_ref.to_string(), call.clone());
        if let Some(out) = self.outputs.lock().unwrap().get(&key) {
            return Ok(out.clone());
        }
        // computed outside the lock; a duplicate computation gives the same value
        let out = dispatch_tool(call, &self.context(record_ref)?);
        self.outputs.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.outputs.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub dialogue_id: String,
    pub scenario: Scenario,
    pub lead_config: LeadConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTurn {
    pub action: Action,
    pub thought: Option<String>,
    /// User utterance or agent text. Empty for tool turns.
    pub text: String,
    pub tool: Option<(ToolCall, ToolOutput)>,
}

impl PlannedTurn {
    pub fn to_turn(&self) -> DialogueTurn {
        let thought = self.thought.clone().unwrap_or_default();
        match (self.action, &self.tool) {
            (Action::User(a), _) => DialogueTurn::user(a, self.text.clone()),
            (Action::Agent(_), Some((call, out))) => DialogueTurn::tool(call.clone(), thought, out.clone()),
            (Action::Agent(a), None) => DialogueTurn::agent(a, thought, self.text.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialoguePlan {
    pub dialogue_id: String,
    pub scenario: Scenario,
    pub lead_config: LeadConfig,
    pub record_ref: String,
    pub turns: Vec<PlannedTurn>,
}

impl DialoguePlan {
    pub fn to_dialogue(&self) -> Dialogue {
        Dialogue {
            dialogue_id: self.dialogue_id.clone(),
            scenario: Some(self.scenario.clone()),
            lead_config: self.lead_config,
            ecg_record_ref: self.record_ref.clone(),
            turns: self.turns.iter().map(PlannedTurn::to_turn).collect(),
        }
    }
}

/// What the skeleton asks of the record.
struct Needs {
    failing_signal_tool: bool,
    explained: bool,
}

fn needs(actions: &[Action]) -> Needs {
    let after = |i: usize| actions.get(i + 1).copied();
    let mut n = Needs { failing_signal_tool: false, explained: false };
    for (i, a) in actions.iter().enumerate() {
        let Action::Agent(agent) = a else { continue };
        match (agent.tool(), after(i)) {
            (Some(ToolKind::Explanation), Some(Action::Agent(AgentAction::Response))) => n.explained = true,
            (Some(ToolKind::Explanation), _) => {}
            (Some(_), Some(Action::Agent(AgentAction::ResponseFail))) => n.failing_signal_tool = true,
            _ => {}
        }
    }
    n
}

/// Candidate records in try order. The start offset comes from `rng`.
fn record_candidates(actions: &[Action], lead_config: LeadConfig, rng: &mut ChaCha8Rng) -> Vec<SynthSpec> {
    let n = needs(actions);
    let kinds: &[RecordKind] = if n.failing_signal_tool {
        &[RecordKind::Flat]
    } else if n.explained {
        &[RecordKind::Pvc, RecordKind::Pac, RecordKind::StDepression]
    } else {
        &[RecordKind::Normal, RecordKind::Pvc, RecordKind::Pac, RecordKind::StDepression, RecordKind::Afib]
    };
    let mut all = Vec::new();
    for &kind in kinds {
        for hr in HR_POOL {
            for seed in SEED_POOL {
                all.push(SynthSpec { kind, heart_rate_bpm: hr, seed, lead_config });
            }
        }
    }
    let start = rng.random_range(0..all.len());
    all.rotate_left(start);
    all
}

/// Builds the plan for one scenario: picks a record whose tool outputs give
/// the statuses the skeleton needs and renders template text.
pub fn plan_dialogue(req: &GenerationRequest, cache: &ToolCache) -> Result<DialoguePlan, GenerateError> {
    let id = &req.scenario.action_sequence_id;
    let seq = action_sequence(id).ok_or_else(|| GenerateError::UnknownSequence(id.clone()))?;
    if !seq.supports(req.lead_config) {
        return Err(GenerateError::UnsupportedSequence(id.clone(), req.lead_config));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    for spec in record_candidates(seq.actions(), req.lead_config, &mut rng) {
        let mut text_rng = ChaCha8Rng::seed_from_u64(req.seed ^ 0x9e37_79b9_7f4a_7c15);
        if let Some(turns) = try_record(req, seq.actions(), &spec, cache, &mut text_rng)? {
            return Ok(DialoguePlan {
                dialogue_id: req.dialogue_id.clone(),
                scenario: req.scenario.clone(),
                lead_config: req.lead_config,
                record_ref: spec.to_string(),
                turns,
            });
        }
    }
    Err(GenerateError::NoRecordFits(id.clone()))
}

fn explain_target(
    actions: &[Action],
    i: usize,
    spec: &SynthSpec,
    record_ref: &str,
    cache: &ToolCache,
) -> Result<Option<String>, GenerateError> {
    let must_succeed = actions.get(i + 1) == Some(&Action::Agent(AgentAction::Response));
    if must_succeed {
        return Ok(spec.kind.class_code().map(str::to_string));
    }
    let out = cache.call(record_ref, &ToolCall::new(ToolKind::Classification))?;
    let predicted = out.classification().map(|c| c.predicted.clone()).unwrap_or_default();
    Ok(INACTIVE_CANDIDATES
        .iter()
        .find(|c| !predicted.iter().any(|p| p == *c))
        .map(|c| c.to_string()))
}

fn try_record(
    req: &GenerationRequest,
    actions: &[Action],
    spec: &SynthSpec,
    cache: &ToolCache,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec<PlannedTurn>>, GenerateError> {
    let (topic, cefr) = (req.scenario.topic, req.scenario.cefr);
    let record_ref = spec.to_string();
    let mut turns: Vec<PlannedTurn> = Vec::with_capacity(actions.len());
    let mut last_tool: Option<ToolOutput> = None;
    let mut first_inquiry = true;
    let mut pending_code: Option<String> = None;
    for (i, &action) in actions.iter().enumerate() {
        let next = actions.get(i + 1).copied();
        let turn = match action {
            Action::User(u) => {
                let intent = match u {
                    UserAction::EcgInquiry => match next {
                        Some(Action::Agent(AgentAction::CallMeasurement)) => Intent::Measure,
                        Some(Action::Agent(AgentAction::CallClassification)) => Intent::Classify,
                        Some(Action::Agent(AgentAction::CallExplanation)) => Intent::Explain(""),
                        _ => Intent::Direct,
                    },
                    UserAction::RequestFollowUp => Intent::FollowUp,
                    UserAction::UserBye => Intent::Bye,
                };
                let code = match intent {
                    Intent::Explain(_) => explain_target(actions, i + 1, spec, &record_ref, cache)?,
                    _ => None,
                };
                pending_code = code.clone();
                let intent = match (&intent, &code) {
                    (Intent::Explain(_), Some(c)) => Intent::Explain(c),
                    (Intent::Explain(_), None) => return Ok(None),
                    _ => intent,
                };
                let variant = rng.random_range(0..2);
                let text = templates::user_utterance(topic, cefr, intent, variant, first_inquiry);
                if u == UserAction::EcgInquiry {
                    first_inquiry = false;
                }
                PlannedTurn { action, thought: None, text, tool: None }
            }
            Action::Agent(a) => match a.tool() {
                Some(kind) => {
                    let call = match kind {
                        ToolKind::Explanation => ToolCall::explain(pending_code.take()),
                        _ => ToolCall::new(kind),
                    };
                    let out = cache.call(&record_ref, &call)?;
                    let wanted_valid = next == Some(Action::Agent(AgentAction::Response));
                    if out.is_valid() != wanted_valid {
                        return Ok(None);
                    }
                    let thought = templates::thought_for_call(kind, call.class_code.as_deref());
                    last_tool = Some(out.clone());
                    PlannedTurn { action, thought: Some(thought), text: String::new(), tool: Some((call, out)) }
                }
                None => {
                    let prev_tool = turns.last().and_then(|t| t.tool.as_ref()).map(|(_, o)| o);
                    let (thought, text) = match a {
                        AgentAction::Response => match prev_tool {
                            Some(out) => (templates::THOUGHT_RESPOND, compose_response(out)),
                            None => (
                                templates::THOUGHT_DIRECT,
                                format!("{} {}", templates::direct_answer(topic), crate::agent::DIRECT_RESPONSE),
                            ),
                        },
                        AgentAction::ResponseFail => match prev_tool {
                            Some(out) => (templates::THOUGHT_FAIL, compose_failure(out)),
                            None => (templates::THOUGHT_FAIL, crate::agent::FALLBACK_FAIL_TEXT.to_string()),
                        },
                        AgentAction::ResponseFollowUp => {
                            (templates::THOUGHT_FOLLOW_UP, compose_follow_up(last_tool.as_ref()))
                        }
                        _ => (templates::THOUGHT_BYE, templates::agent_bye(cefr).to_string()),
                    };
                    PlannedTurn { action, thought: Some(thought.to_string()), text, tool: None }
                }
            },
        };
        turns.push(turn);
    }
    Ok(Some(turns))
}

/// Supplies the surface text of a plan.
pub trait DialogueGenerator: Send + Sync {
    fn id(&self) -> &str;
    fn realize(&self, plan: &DialoguePlan, cache: &ToolCache) -> Result<Dialogue, GenerateError>;
}

/// Template text as planned.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplatedGenerator;

impl DialogueGenerator for TemplatedGenerator {
    fn id(&self) -> &str {
        "templated"
    }

    fn realize(&self, plan: &DialoguePlan, _cache: &ToolCache) -> Result<Dialogue, GenerateError> {
        Ok(plan.to_dialogue())
    }
}

/// Rewrites plan text through an OpenAI-compatible chat endpoint. The model
/// answers with a JSON array of `{action, thought, content}` objects; tool
/// turns keep planned outputs when the action matches and are re-run
/// otherwise. Any deviation is left for the corpus filter to catch.
pub struct LlmGenerator {
    config: ChatBackendConfig,
    transport: Box<dyn Transport>,
}

#[derive(Deserialize)]
struct LlmTurn {
    action: Action,
    #[serde(default)]
    thought: Option<String>,
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    class_code: Option<String>,
}

impl LlmGenerator {
    pub fn new(config: ChatBackendConfig) -> Self {
        Self::with_transport(config, Box::new(UreqTransport))
    }

    pub fn with_transport(config: ChatBackendConfig, transport: Box<dyn Transport>) -> Self {
        LlmGenerator { config, transport }
    }

    pub fn request_body(&self, plan: &DialoguePlan) -> Value {
        let draft: Vec<Value> = plan
            .turns
            .iter()
            .map(|t| {
                let mut v = json!({ "action": t.action, "thought": t.thought, "content": t.text });
                if let Some((call, out)) = &t.tool {
                    v["class_code"] = json!(call.class_code);
                    v["tool_output"] = serde_json::to_value(out).unwrap_or(Value::Null);
                }
                v
            })
            .collect();
        let system = format!(
            "You write one dialogue between a user and an ECG assistant. Topic: {}. The user speaks at CEFR level {}. \
Keep the action of every turn in order. Rewrite thought and content so they read naturally. Agent responses may \
only state values present in the preceding tool output. Answer with a JSON array of objects with keys action, \
thought, content and class_code, nothing else.",
            plan.scenario.topic,
            plan.scenario.cefr.as_str()
        );
        json!({
            "model": self.config.model,
            "temperature": 0.7,
            "max_tokens": self.config.max_tokens.max(2048),
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": Value::Array(draft).to_string() },
            ],
        })
    }
}

fn strip_fence(s: &str) -> &str {
    let t = s.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

impl DialogueGenerator for LlmGenerator {
    fn id(&self) -> &str {
        "llm"
    }

    fn realize(&self, plan: &DialoguePlan, cache: &ToolCache) -> Result<Dialogue, GenerateError> {
        let raw = chat_complete(self.transport.as_ref(), &self.config, &self.request_body(plan))
            .map_err(|e| GenerateError::Backend(e.to_string()))?;
        let turns: Vec<LlmTurn> =
            serde_json::from_str(strip_fence(&raw)).map_err(|e| GenerateError::Backend(format!("bad dialogue: {e}")))?;
        let mut out = Vec::with_capacity(turns.len());
        for (i, t) in turns.into_iter().enumerate() {
            let planned = plan.turns.get(i).filter(|p| p.action == t.action);
            let thought = t.thought.unwrap_or_default();
            let content = t.content.unwrap_or_default();
            let turn = match t.action {
                Action::User(u) => DialogueTurn::user(u, content),
                Action::Agent(a) => match a.tool() {
                    Some(kind) => {
                        let (call, output) = match planned.and_then(|p| p.tool.clone()) {
                            Some(pair) => pair,
                            None => {
                                let call = match kind {
                                    ToolKind::Explanation => ToolCall::explain(t.class_code),
                                    _ => ToolCall::new(kind),
                                };
                                let output = cache.call(&plan.record_ref, &call)?;
                                (call, output)
                            }
                        };
                        DialogueTurn::tool(call, thought, output)
                    }
                    None => DialogueTurn::Agent { action: a, thought, payload: AgentPayload::Content(content) },
                },
            };
            out.push(turn);
        }
        let mut d = plan.to_dialogue();
        d.turns = out;
        Ok(d)
    }
}
