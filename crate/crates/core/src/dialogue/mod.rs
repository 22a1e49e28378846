//! Action schema, turns, the action-sequence grammar and the ECG-MTD JSON
//! interchange format.

mod grammar;
mod json;
mod sequences;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::signal::LeadConfig;
use crate::tool::{ToolCall, ToolKind, ToolOutput};

pub use grammar::{
    legal_next_actions, step, step_action, validate_action_sequence, validate_for, DialogueState, GrammarMode, Rule,
    Violation,
};
pub use json::{parse_dialogue, serialize_dialogue, DialogueError};
pub use sequences::{action_sequence, action_sequences, sequences_for, ActionSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topic {
    SymptomInterpretation,
    MedicationEffects,
    MeasurementMeaning,
    DeviceUsage,
    ArrhythmiaDiagnosis,
    LifestyleRisk,
    ReportClarification,
}

impl Topic {
    pub const ALL: [Topic; 7] = [
        Topic::SymptomInterpretation,
        Topic::MedicationEffects,
        Topic::MeasurementMeaning,
        Topic::DeviceUsage,
        Topic::ArrhythmiaDiagnosis,
        Topic::LifestyleRisk,
        Topic::ReportClarification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::SymptomInterpretation => "symptom-interpretation",
            Topic::MedicationEffects => "medication-effects",
            Topic::MeasurementMeaning => "measurement-meaning",
            Topic::DeviceUsage => "device-usage",
            Topic::ArrhythmiaDiagnosis => "arrhythmia-diagnosis",
            Topic::LifestyleRisk => "lifestyle-risk",
            Topic::ReportClarification => "report-clarification",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown topic `{s}`"))
    }
}

/// CEFR vocabulary tier of the simulated user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cefr {
    A,
    B,
    C,
}

impl Cefr {
    pub const ALL: [Cefr; 3] = [Cefr::A, Cefr::B, Cefr::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Cefr::A => "A",
            Cefr::B => "B",
            Cefr::C => "C",
        }
    }
}

impl FromStr for Cefr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Cefr::A),
            "B" | "b" => Ok(Cefr::B),
            "C" | "c" => Ok(Cefr::C),
            _ => Err(format!("unknown CEFR level `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub topic: Topic,
    pub cefr: Cefr,
    pub action_sequence_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserAction {
    EcgInquiry,
    RequestFollowUp,
    UserBye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    Response,
    ResponseFail,
    ResponseFollowUp,
    SystemBye,
    CallClassification,
    CallMeasurement,
    CallExplanation,
}

impl AgentAction {
    pub const ALL: [AgentAction; 7] = [
        AgentAction::Response,
        AgentAction::ResponseFail,
        AgentAction::ResponseFollowUp,
        AgentAction::SystemBye,
        AgentAction::CallClassification,
        AgentAction::CallMeasurement,
        AgentAction::CallExplanation,
    ];

    pub fn tool(self) -> Option<ToolKind> {
        match self {
            AgentAction::CallClassification => Some(ToolKind::Classification),
            AgentAction::CallMeasurement => Some(ToolKind::Measurement),
            AgentAction::CallExplanation => Some(ToolKind::Explanation),
            _ => None,
        }
    }

    pub fn for_tool(tool: ToolKind) -> Self {
        match tool {
            ToolKind::Classification => AgentAction::CallClassification,
            ToolKind::Measurement => AgentAction::CallMeasurement,
            ToolKind::Explanation => AgentAction::CallExplanation,
        }
    }

    pub fn is_tool(self) -> bool {
        self.tool().is_some()
    }

    /// Name used on the `Action:` line of agent output. Tool actions use the
    /// bare tool name.
    pub fn tag(self) -> &'static str {
        match self {
            AgentAction::Response => "response",
            AgentAction::ResponseFail => "response_fail",
            AgentAction::ResponseFollowUp => "response_follow_up",
            AgentAction::SystemBye => "system_bye",
            AgentAction::CallClassification => "classification",
            AgentAction::CallMeasurement => "measurement",
            AgentAction::CallExplanation => "explanation",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        AgentAction::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

/// Either side's action, as listed in an action sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    User(UserAction),
    Agent(AgentAction),
}

impl Action {
    pub const ALL: [Action; 10] = [
        Action::User(UserAction::EcgInquiry),
        Action::User(UserAction::RequestFollowUp),
        Action::User(UserAction::UserBye),
        Action::Agent(AgentAction::Response),
        Action::Agent(AgentAction::ResponseFail),
        Action::Agent(AgentAction::ResponseFollowUp),
        Action::Agent(AgentAction::SystemBye),
        Action::Agent(AgentAction::CallClassification),
        Action::Agent(AgentAction::CallMeasurement),
        Action::Agent(AgentAction::CallExplanation),
    ];

    pub fn speaker(self) -> Speaker {
        match self {
            Action::User(_) => Speaker::User,
            Action::Agent(_) => Speaker::Agent,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::User(UserAction::EcgInquiry) => "ecg_inquiry",
            Action::User(UserAction::RequestFollowUp) => "request_follow_up",
            Action::User(UserAction::UserBye) => "user_bye",
            Action::Agent(AgentAction::Response) => "response",
            Action::Agent(AgentAction::ResponseFail) => "response_fail",
            Action::Agent(AgentAction::ResponseFollowUp) => "response_follow_up",
            Action::Agent(AgentAction::SystemBye) => "system_bye",
            Action::Agent(AgentAction::CallClassification) => "call_classification",
            Action::Agent(AgentAction::CallMeasurement) => "call_measurement",
            Action::Agent(AgentAction::CallExplanation) => "call_explanation",
        }
    }

    pub fn is_tool(self) -> bool {
        matches!(self, Action::Agent(a) if a.is_tool())
    }
}

impl From<UserAction> for Action {
    fn from(a: UserAction) -> Self {
        Action::User(a)
    }
}

impl From<AgentAction> for Action {
    fn from(a: AgentAction) -> Self {
        Action::Agent(a)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for UserAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Action::User(*self).fmt(f)
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Action::Agent(*self).fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentPayload {
    Content(String),
    Tool { call: ToolCall, output: ToolOutput },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DialogueTurn {
    User {
        action: UserAction,
        content: String,
    },
    Agent {
        action: AgentAction,
        thought: String,
        payload: AgentPayload,
    },
}

impl DialogueTurn {
    pub fn user(action: UserAction, content: impl Into<String>) -> Self {
        DialogueTurn::User {
            action,
            content: content.into(),
        }
    }

    pub fn agent(action: AgentAction, thought: impl Into<String>, content: impl Into<String>) -> Self {
        DialogueTurn::Agent {
            action,
            thought: thought.into(),
            payload: AgentPayload::Content(content.into()),
        }
    }

    pub fn tool(call: ToolCall, thought: impl Into<String>, output: ToolOutput) -> Self {
        DialogueTurn::Agent {
            action: AgentAction::for_tool(call.tool),
            thought: thought.into(),
            payload: AgentPayload::Tool { call, output },
        }
    }

    pub fn action(&self) -> Action {
        match self {
            DialogueTurn::User { action, .. } => Action::User(*action),
            DialogueTurn::Agent { action, .. } => Action::Agent(*action),
        }
    }

    pub fn speaker(&self) -> Speaker {
        self.action().speaker()
    }

    pub fn thought(&self) -> Option<&str> {
        match self {
            DialogueTurn::Agent { thought, .. } => Some(thought),
            DialogueTurn::User { .. } => None,
        }
    }

    /// Text of a user turn or a non-tool agent turn.
    pub fn content(&self) -> Option<&str> {
        match self {
            DialogueTurn::User { content, .. } => Some(content),
            DialogueTurn::Agent {
                payload: AgentPayload::Content(c),
                ..
            } => Some(c),
            _ => None,
        }
    }

    pub fn tool_output(&self) -> Option<&ToolOutput> {
        match self {
            DialogueTurn::Agent {
                payload: AgentPayload::Tool { output, .. },
                ..
            } => Some(output),
            _ => None,
        }
    }

    pub fn tool_call(&self) -> Option<&ToolCall> {
        match self {
            DialogueTurn::Agent {
                payload: AgentPayload::Tool { call, .. },
                ..
            } => Some(call),
            _ => None,
        }
    }

    /// Shape invariants independent of dialogue position.
    pub fn check_shape(&self) -> Result<(), String> {
        let DialogueTurn::Agent { action, thought, payload } = self else {
            return Ok(());
        };
        if thought.trim().is_empty() {
            return Err("agent turn has an empty thought".into());
        }
        match (action.tool(), payload) {
            (Some(kind), AgentPayload::Tool { call, output }) => {
                if call.tool != kind || output.tool() != kind {
                    return Err(format!(
                        "{action} turn carries a {} call with {} output",
                        call.tool,
                        output.tool()
                    ));
                }
                Ok(())
            }
            (Some(_), AgentPayload::Content(_)) => Err(format!("{action} turn needs a tool output")),
            (None, AgentPayload::Tool { .. }) => Err(format!("{action} turn cannot carry a tool output")),
            (None, AgentPayload::Content(_)) => Ok(()),
        }
    }
}

/// One conversation. Live sessions have no scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub scenario: Option<Scenario>,
    pub lead_config: LeadConfig,
    pub ecg_record_ref: String,
    pub turns: Vec<DialogueTurn>,
}

impl Dialogue {
    pub fn actions(&self) -> Vec<Action> {
        self.turns.iter().map(DialogueTurn::action).collect()
    }

    pub fn agent_turn_count(&self) -> usize {
        self.turns.iter().filter(|t| t.speaker() == Speaker::Agent).count()
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.turns.last(), Some(t) if t.action() == Action::Agent(AgentAction::SystemBye))
    }

    /// Replays every turn. Returns the final state.
    pub fn replay(&self, mode: GrammarMode) -> Result<DialogueState, Violation> {
        let mut state = DialogueState::new(self.lead_config, mode);
        for (i, turn) in self.turns.iter().enumerate() {
            state = step(&state, turn).map_err(|v| v.at(i))?;
        }
        Ok(state)
    }
}
