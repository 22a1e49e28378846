//! The dialogue state machine.
//!
//! Rules:
//! - G1: the dialogue opens with `ecg_inquiry`.
//! - G2: user and agent alternate, except that a tool turn is followed by a
//!   second agent turn.
//! - G3: a tool turn is followed by `response` or `response_fail`.
//! - G4: `response_follow_up` answers `request_follow_up` and nothing else,
//!   with no tool call in between.
//! - G5: `user_bye` is followed only by `system_bye`, which is terminal.
//! - G6: `response_fail` only after an invalid tool output.
//!
//! [`GrammarMode::Strict`] applies G6 as written and is what corpus
//! dialogues must satisfy. [`GrammarMode::Runtime`] also admits
//! `response_fail` wherever a reply is due, so a live agent whose backend
//! keeps failing can still fail in-schema. An invalid tool output admits
//! only `response_fail` in both modes.

use std::collections::BTreeSet;
use std::fmt;

use super::{Action, AgentAction, DialogueTurn, UserAction};
use crate::signal::LeadConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum GrammarMode {
    #[default]
    Strict,
    Runtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Phase {
    Start,
    Inquiry,
    FollowUp,
    /// `Some(valid)` once the tool output is known.
    Tool(Option<bool>),
    User { follow_up_ok: bool },
    Bye,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DialogueState {
    lead_config: LeadConfig,
    mode: GrammarMode,
    phase: Phase,
}

impl DialogueState {
    pub fn new(lead_config: LeadConfig, mode: GrammarMode) -> Self {
        DialogueState {
            lead_config,
            mode,
            phase: Phase::Start,
        }
    }

    pub fn lead_config(&self) -> LeadConfig {
        self.lead_config
    }

    pub fn mode(&self) -> GrammarMode {
        self.mode
    }

    pub fn is_terminal(&self) -> bool {
        self.phase == Phase::Terminal
    }

    /// True when the next turn belongs to the user.
    pub fn awaits_user(&self) -> bool {
        matches!(self.phase, Phase::Start | Phase::User { .. })
    }

    /// True when the previous turn was a tool call whose output was invalid.
    pub fn after_invalid_tool(&self) -> bool {
        self.phase == Phase::Tool(Some(false))
    }

    /// True when the previous turn was a tool call.
    pub fn after_tool(&self) -> bool {
        matches!(self.phase, Phase::Tool(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
    /// Explanation is not available for 12-lead records.
    LeadConfig,
    /// A turn was offered after `system_bye`.
    Terminal,
    /// The turn itself is malformed (empty thought, payload mismatch).
    TurnShape,
    /// The sequence stops before `system_bye`.
    Incomplete,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::G1 => "G1",
            Rule::G2 => "G2",
            Rule::G3 => "G3",
            Rule::G4 => "G4",
            Rule::G5 => "G5",
            Rule::G6 => "G6",
            Rule::LeadConfig => "lead_config",
            Rule::Terminal => "terminal",
            Rule::TurnShape => "turn_shape",
            Rule::Incomplete => "incomplete",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub position: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

impl Violation {
    fn new(rule: Rule, message: impl Into<String>) -> Self {
        Violation {
            position: None,
            rule,
            message: message.into(),
        }
    }

    pub fn at(mut self, position: usize) -> Self {
        self.position = Some(position);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some(p) => write!(f, "turn {p}: {} ({})", self.message, self.rule),
            None => write!(f, "{} ({})", self.message, self.rule),
        }
    }
}

impl std::error::Error for Violation {}

/// Why `action` is illegal in `state`, or `None` if it is legal.
fn reject(state: &DialogueState, action: Action) -> Option<Violation> {
    use AgentAction as A;
    let strict = state.mode == GrammarMode::Strict;
    let v = |rule, msg: String| Some(Violation::new(rule, msg));
    match (state.phase, action) {
        (Phase::Terminal, _) => v(Rule::Terminal, format!("{action} after system_bye")),
        (Phase::Start, Action::User(UserAction::EcgInquiry)) => None,
        (Phase::Start, _) => v(Rule::G1, format!("dialogue must open with ecg_inquiry, not {action}")),
        (Phase::Bye, Action::Agent(A::SystemBye)) => None,
        (Phase::Bye, _) => v(Rule::G5, format!("user_bye must be followed by system_bye, not {action}")),

        (Phase::User { .. }, Action::Agent(_)) => v(Rule::G2, format!("{action} where a user turn is due")),
        (Phase::User { follow_up_ok: false }, Action::User(UserAction::RequestFollowUp)) => {
            v(Rule::G4, "request_follow_up with nothing to follow up on".into())
        }
        (Phase::User { .. }, Action::User(_)) => None,

        (_, Action::User(_)) => v(
            if matches!(state.phase, Phase::Tool(_)) { Rule::G3 } else { Rule::G2 },
            format!("{action} where an agent turn is due"),
        ),

        (Phase::Tool(status), Action::Agent(a)) => match (a, status) {
            (A::ResponseFail, Some(false)) | (A::Response, Some(true)) | (A::Response | A::ResponseFail, None) => None,
            (A::ResponseFail, Some(true)) if !strict => None,
            (A::ResponseFail, Some(true)) => v(Rule::G6, "response_fail after a valid tool output".into()),
            (A::Response, Some(false)) => v(Rule::G6, "invalid tool output must be answered with response_fail".into()),
            _ => v(Rule::G3, format!("tool turn must be followed by response or response_fail, not {action}")),
        },

        (Phase::Inquiry | Phase::FollowUp, Action::Agent(A::ResponseFail)) if strict => {
            v(Rule::G6, "response_fail without a failed tool call".into())
        }
        (Phase::Inquiry | Phase::FollowUp, Action::Agent(A::ResponseFail)) => None,
        (Phase::Inquiry | Phase::FollowUp, Action::Agent(A::SystemBye)) => {
            v(Rule::G5, "system_bye only answers user_bye".into())
        }

        (Phase::Inquiry, Action::Agent(A::ResponseFollowUp)) => {
            v(Rule::G4, "response_follow_up only answers request_follow_up".into())
        }
        (Phase::Inquiry, Action::Agent(A::CallExplanation)) if state.lead_config == LeadConfig::TwelveLead => {
            v(Rule::LeadConfig, "explanation is unavailable for 12-lead records".into())
        }
        (Phase::Inquiry, Action::Agent(_)) => None,

        (Phase::FollowUp, Action::Agent(A::ResponseFollowUp)) => None,
        (Phase::FollowUp, Action::Agent(_)) => {
            v(Rule::G4, format!("request_follow_up must be answered with response_follow_up, not {action}"))
        }
    }
}

fn advance(phase: Phase, action: Action, tool_valid: Option<bool>) -> Phase {
    use AgentAction as A;
    match action {
        Action::User(UserAction::EcgInquiry) => Phase::Inquiry,
        Action::User(UserAction::RequestFollowUp) => Phase::FollowUp,
        Action::User(UserAction::UserBye) => Phase::Bye,
        Action::Agent(A::SystemBye) => Phase::Terminal,
        Action::Agent(A::ResponseFail) => Phase::User { follow_up_ok: false },
        Action::Agent(A::Response | A::ResponseFollowUp) => Phase::User { follow_up_ok: true },
        Action::Agent(_) => {
            debug_assert!(phase == Phase::Inquiry);
            Phase::Tool(tool_valid)
        }
    }
}

/// Step on a bare action. `tool_valid` is the output status for tool
/// actions, if known.
pub fn step_action(state: &DialogueState, action: Action, tool_valid: Option<bool>) -> Result<DialogueState, Violation> {
    if let Some(v) = reject(state, action) {
        return Err(v);
    }
    Ok(DialogueState {
        phase: advance(state.phase, action, if action.is_tool() { tool_valid } else { None }),
        ..*state
    })
}

pub fn step(state: &DialogueState, turn: &DialogueTurn) -> Result<DialogueState, Violation> {
    turn.check_shape().map_err(|m| Violation::new(Rule::TurnShape, m))?;
    step_action(state, turn.action(), turn.tool_output().map(|o| o.is_valid()))
}

pub fn legal_next_actions(state: &DialogueState) -> BTreeSet<Action> {
    Action::ALL.into_iter().filter(|&a| reject(state, a).is_none()).collect()
}

/// Checks a complete action sequence under the strict grammar for a
/// single-lead record. An illegal action is reported and skipped so later
/// positions are still checked.
pub fn validate_action_sequence(seq: &[Action]) -> Result<(), Vec<Violation>> {
    validate_for(seq, LeadConfig::LeadII)
}

pub fn validate_for(seq: &[Action], lead_config: LeadConfig) -> Result<(), Vec<Violation>> {
    let mut state = DialogueState::new(lead_config, GrammarMode::Strict);
    let mut violations = Vec::new();
    for (i, &a) in seq.iter().enumerate() {
        match step_action(&state, a, None) {
            Ok(next) => state = next,
            Err(v) => violations.push(v.at(i)),
        }
    }
    if !state.is_terminal() && violations.is_empty() {
        violations.push(Violation::new(Rule::Incomplete, "sequence does not end with system_bye").at(seq.len()));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
