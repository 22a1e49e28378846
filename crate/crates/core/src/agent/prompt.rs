//! Backend requests: the history, reasoning trace and current utterance the
//! agent conditions on, and their rendering into a prompt.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dialogue::{Action, DialogueTurn, Scenario, Speaker, UserAction};
use crate::signal::LeadConfig;

pub const SYSTEM_PROMPT: &str = include_str!("../../prompts/system_prompt.txt");
pub const TOKEN_BUDGET: usize = 4096;
const CHARS_PER_TOKEN: usize = 4;

/// One prior turn as the backend sees it. Thoughts are carried separately
/// in the reasoning trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub speaker: Speaker,
    pub action: Action,
    /// User or agent text, or the tool output JSON for tool turns.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_input: Option<Value>,
}

impl HistoryEntry {
    pub fn from_turn(turn: &DialogueTurn) -> Self {
        let (text, tool_input) = match (turn.content(), turn.tool_output()) {
            (Some(c), _) => (c.to_string(), None),
            (None, Some(out)) => (
                serde_json::to_string(out).expect("tool output serializes"),
                turn.tool_call().filter(|c| c.class_code.is_some()).map(|c| c.arguments()),
            ),
            (None, None) => unreachable!("every turn has content or a tool output"),
        };
        HistoryEntry {
            speaker: turn.speaker(),
            action: turn.action(),
            text,
            tool_input,
        }
    }

    pub fn render(&self) -> String {
        let who = match self.speaker {
            Speaker::User => "User",
            Speaker::Agent => "Agent",
        };
        match &self.tool_input {
            Some(args) => format!("{who} [{}] {args}: {}", self.action, self.text),
            None => format!("{who} [{}]: {}", self.action, self.text),
        }
    }
}

/// Fixed context that is never truncated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestHeader {
    pub lead_config: LeadConfig,
    pub ecg_record_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
}

impl RequestHeader {
    pub fn render(&self) -> String {
        let tools = if self.lead_config.is_single_lead() {
            "classification, measurement, explanation"
        } else {
            "classification, measurement"
        };
        let mut s = format!(
            "Recording: {} ({}). Available tools: {tools}.",
            self.ecg_record_ref, self.lead_config
        );
        if let Some(sc) = &self.scenario {
            s.push_str(&format!(" Topic: {}. User CEFR level: {}.", sc.topic, sc.cefr.as_str()));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub system_prompt: String,
    pub header: RequestHeader,
    /// Position (user and agent turns counted jointly) of the agent turn
    /// being requested.
    pub turn_index: usize,
    /// Turns before the current user utterance, oldest first.
    pub history: Vec<HistoryEntry>,
    /// Thoughts of the agent turns in `history` and `current_exchange`.
    pub reasoning_trace: Vec<String>,
    pub user_action: UserAction,
    pub user_utterance: String,
    /// Agent turns already produced in reply to the current utterance.
    pub current_exchange: Vec<HistoryEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    pub token_budget: usize,
    /// Oldest history entries dropped to fit the budget.
    pub dropped_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("the prompt needs {tokens} tokens even without history; budget is {budget}")]
    OverBudget { tokens: usize, budget: usize },
    #[error("no user turn to respond to")]
    NoUserTurn,
}

pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(CHARS_PER_TOKEN)
}

impl BackendRequest {
    /// The request for the agent turn that follows `turns`.
    pub fn build(
        system_prompt: &str,
        header: RequestHeader,
        turns: &[DialogueTurn],
        feedback: Option<String>,
        token_budget: usize,
    ) -> Result<Self, PromptError> {
        let u = turns
            .iter()
            .rposition(|t| t.speaker() == Speaker::User)
            .ok_or(PromptError::NoUserTurn)?;
        let DialogueTurn::User { action, content } = &turns[u] else {
            unreachable!()
        };
        let mut req = BackendRequest {
            system_prompt: system_prompt.to_string(),
            header,
            turn_index: turns.len(),
            history: turns[..u].iter().map(HistoryEntry::from_turn).collect(),
            reasoning_trace: turns.iter().filter_map(|t| t.thought().map(str::to_string)).collect(),
            user_action: *action,
            user_utterance: content.clone(),
            current_exchange: turns[u + 1..].iter().map(HistoryEntry::from_turn).collect(),
            feedback,
            token_budget,
            dropped_entries: 0,
        };
        while req.tokens() > token_budget {
            if req.history.is_empty() {
                return Err(PromptError::OverBudget {
                    tokens: req.tokens(),
                    budget: token_budget,
                });
            }
            let dropped = req.history.remove(0);
            if dropped.speaker == Speaker::Agent {
                req.reasoning_trace.remove(0);
            }
            req.dropped_entries += 1;
        }
        Ok(req)
    }

    /// System message: prompt and header.
    pub fn system_message(&self) -> String {
        format!("{}\n{}", self.system_prompt.trim_end(), self.header.render())
    }

    /// User message: history, reasoning, the utterance and the exchange so far.
    pub fn user_message(&self) -> String {
        let mut s = String::new();
        if !self.history.is_empty() {
            s.push_str("### History\n");
            for e in &self.history {
                s.push_str(&e.render());
                s.push('\n');
            }
        }
        if !self.reasoning_trace.is_empty() {
            s.push_str("### Your earlier thoughts\n");
            for (i, t) in self.reasoning_trace.iter().enumerate() {
                s.push_str(&format!("{}. {t}\n", i + 1));
            }
        }
        s.push_str(&format!("### User [{}]\n{}\n", self.user_action, self.user_utterance));
        if !self.current_exchange.is_empty() {
            s.push_str("### This turn so far\n");
            for e in &self.current_exchange {
                s.push_str(&e.render());
                s.push('\n');
            }
        }
        if let Some(f) = &self.feedback {
            s.push_str(&format!("### Your previous output was rejected\n{f}\n"));
        }
        s.push_str("### Next agent turn\n");
        s
    }

    pub fn tokens(&self) -> usize {
        estimate_tokens(&self.system_message()) + estimate_tokens(&self.user_message())
    }

    /// All prior turns, including those in the current exchange.
    pub fn full_history(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.history.iter().chain(&self.current_exchange)
    }
}
