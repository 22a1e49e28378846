//! ECG-MTD JSON. One dialogue is one JSON object:
//!
//! ```json
//! {"dialogue_id": "...",
//!  "scenario": {"topic": "device-usage", "cefr": "A", "action_sequence_id": "seq-01"},
//!  "lead_config": "lead_ii",
//!  "ecg_record_ref": "synth:...",
//!  "turns": [{"speaker": "user", "action": "ecg_inquiry", "content": "..."},
//!            {"speaker": "agent", "action": "call_classification", "thought": "...",
//!             "tool_output": {...}}]}
//! ```
//!
//! Tool turns may add `tool_input` with the call arguments when there are
//! any. `scenario` is absent for live sessions.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::{
    action_sequence, Action, AgentPayload, Dialogue, DialogueTurn, GrammarMode, Scenario, Speaker, Violation,
};
use crate::signal::LeadConfig;
use crate::tool::{ToolCall, ToolOutput};

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("grammar violation: {0}")]
    Grammar(Violation),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTurn {
    speaker: Speaker,
    action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thought: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_input: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_output: Option<ToolOutput>,
}

impl Serialize for DialogueTurn {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let wire = match self {
            DialogueTurn::User { action, content } => WireTurn {
                speaker: Speaker::User,
                action: Action::User(*action),
                thought: None,
                content: Some(content.clone()),
                tool_input: None,
                tool_output: None,
            },
            DialogueTurn::Agent { action, thought, payload } => {
                let (content, tool_input, tool_output) = match payload {
                    AgentPayload::Content(c) => (Some(c.clone()), None, None),
                    AgentPayload::Tool { call, output } => (
                        None,
                        call.class_code.is_some().then(|| call.arguments()),
                        Some(output.clone()),
                    ),
                };
                WireTurn {
                    speaker: Speaker::Agent,
                    action: Action::Agent(*action),
                    thought: Some(thought.clone()),
                    content,
                    tool_input,
                    tool_output,
                }
            }
        };
        wire.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DialogueTurn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = WireTurn::deserialize(d)?;
        if w.action.speaker() != w.speaker {
            return Err(D::Error::custom(format!("action {} does not belong to the {:?} speaker", w.action, w.speaker)));
        }
        let turn = match w.action {
            Action::User(action) => {
                if w.thought.is_some() || w.tool_input.is_some() || w.tool_output.is_some() {
                    return Err(D::Error::custom("user turns carry only content"));
                }
                let content = w.content.ok_or_else(|| D::Error::custom("user turn needs content"))?;
                DialogueTurn::User { action, content }
            }
            Action::Agent(action) => {
                let thought = w.thought.ok_or_else(|| D::Error::custom("agent turn needs a thought"))?;
                let payload = match action.tool() {
                    Some(kind) => {
                        if w.content.is_some() {
                            return Err(D::Error::custom("tool turns carry tool_output, not content"));
                        }
                        let output = w.tool_output.ok_or_else(|| D::Error::custom("tool turn needs tool_output"))?;
                        let args = w.tool_input.unwrap_or_else(|| Value::Object(Default::default()));
                        let call = ToolCall::from_arguments(kind, &args).map_err(D::Error::custom)?;
                        AgentPayload::Tool { call, output }
                    }
                    None => {
                        if w.tool_input.is_some() || w.tool_output.is_some() {
                            return Err(D::Error::custom(format!("{action} turn cannot carry a tool output")));
                        }
                        AgentPayload::Content(w.content.ok_or_else(|| D::Error::custom("agent turn needs content"))?)
                    }
                };
                let turn = DialogueTurn::Agent { action, thought, payload };
                turn.check_shape().map_err(D::Error::custom)?;
                turn
            }
        };
        Ok(turn)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDialogue {
    dialogue_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<Scenario>,
    lead_config: LeadConfig,
    ecg_record_ref: String,
    turns: Vec<DialogueTurn>,
}

impl Serialize for Dialogue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WireDialogue {
            dialogue_id: self.dialogue_id.clone(),
            scenario: self.scenario.clone(),
            lead_config: self.lead_config,
            ecg_record_ref: self.ecg_record_ref.clone(),
            turns: self.turns.clone(),
        }
        .serialize(s)
    }
}

/// Schema-level decoding only. Use [`parse_dialogue`] for full validation.
impl<'de> Deserialize<'de> for Dialogue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = WireDialogue::deserialize(d)?;
        Ok(Dialogue {
            dialogue_id: w.dialogue_id,
            scenario: w.scenario,
            lead_config: w.lead_config,
            ecg_record_ref: w.ecg_record_ref,
            turns: w.turns,
        })
    }
}

/// Compact single-line JSON, suitable for JSONL.
pub fn serialize_dialogue(d: &Dialogue) -> Vec<u8> {
    serde_json::to_vec(d).expect("dialogue serialization is infallible")
}

/// Decodes and validates a dialogue. Unfinished dialogues are accepted as
/// long as every turn so far is legal under the runtime grammar.
pub fn parse_dialogue(bytes: &[u8]) -> Result<Dialogue, DialogueError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let d: Dialogue = serde_path_to_error::deserialize(&mut de).map_err(|e| DialogueError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| DialogueError::Schema {
        path: ".".into(),
        message: e.to_string(),
    })?;
    if let Some(sc) = &d.scenario {
        if action_sequence(&sc.action_sequence_id).is_none() {
            return Err(DialogueError::Schema {
                path: "scenario.action_sequence_id".into(),
                message: format!("unknown action sequence `{}`", sc.action_sequence_id),
            });
        }
    }
    d.replay(GrammarMode::Runtime).map_err(DialogueError::Grammar)?;
    Ok(d)
}
