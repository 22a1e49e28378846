//! Next-action prediction runs with ground-truth or self-generated history.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::agent::{
    parse_agent_output, Backend, BackendRequest, ChatBackend, ChatBackendConfig, GtReplayBackend, ParsedPayload,
    RequestHeader, RulePolicyBackend, Session, SessionConfig,
};
use crate::dialogue::{Action, AgentAction, AgentPayload, Dialogue, DialogueTurn, Speaker};
use crate::mtd::ToolCache;
use crate::tool::ToolOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NapMode {
    WithGt,
    WithoutGt,
}

/// Builds one backend per evaluated dialogue.
pub trait AgentFactory: Sync {
    fn id(&self) -> String;
    fn backend(&self, ground_truth: &Dialogue) -> Box<dyn Backend>;
}

/// Emits the ground-truth turn at each position.
#[derive(Debug, Clone, Copy, Default)]
pub struct GtReplayAgent;

impl AgentFactory for GtReplayAgent {
    fn id(&self) -> String {
        "gt-replay".into()
    }

    fn backend(&self, ground_truth: &Dialogue) -> Box<dyn Backend> {
        Box::new(GtReplayBackend::new(ground_truth.clone()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RulePolicyAgent;

impl AgentFactory for RulePolicyAgent {
    fn id(&self) -> String {
        "rule-policy".into()
    }

    fn backend(&self, _: &Dialogue) -> Box<dyn Backend> {
        Box::new(RulePolicyBackend)
    }
}

#[derive(Debug, Clone)]
pub struct ChatAgent(pub ChatBackendConfig);

impl AgentFactory for ChatAgent {
    fn id(&self) -> String {
        self.0.model.clone()
    }

    fn backend(&self, _: &Dialogue) -> Box<dyn Backend> {
        Box::new(ChatBackend::new(self.0.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseCategory {
    PostClassification,
    PostMeasurement,
    PostExplanation,
    Direct,
}

/// Category of ground-truth turn `k` if it is a judged response.
pub fn response_category(turns: &[DialogueTurn], k: usize) -> Option<ResponseCategory> {
    if turns.get(k)?.action() != Action::Agent(AgentAction::Response) {
        return None;
    }
    let prev = turns.get(k.checked_sub(1)?)?.action();
    match prev {
        Action::Agent(AgentAction::CallClassification) => Some(ResponseCategory::PostClassification),
        Action::Agent(AgentAction::CallMeasurement) => Some(ResponseCategory::PostMeasurement),
        Action::Agent(AgentAction::CallExplanation) => Some(ResponseCategory::PostExplanation),
        Action::User(_) => Some(ResponseCategory::Direct),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnPrediction {
    pub turn_index: usize,
    pub expected: Action,
    pub predicted: Option<Action>,
    pub error: Option<String>,
}

impl TurnPrediction {
    pub fn is_match(&self) -> bool {
        self.predicted == Some(self.expected)
    }
}

/// A response the harness scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSample {
    pub turn_index: usize,
    pub category: Option<ResponseCategory>,
    pub preceding_tool: Option<ToolOutput>,
    pub response: Option<String>,
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NapRun {
    pub mode: NapMode,
    pub predictions: Vec<TurnPrediction>,
    pub samples: Vec<ResponseSample>,
    /// The transcript the quality metrics look at.
    pub transcript: Dialogue,
}

impl NapRun {
    pub fn matched(&self) -> usize {
        self.predictions.iter().filter(|p| p.is_match()).count()
    }
}

fn header(d: &Dialogue) -> RequestHeader {
    RequestHeader { lead_config: d.lead_config, ecg_record_ref: d.ecg_record_ref.clone(), scenario: d.scenario.clone() }
}

/// Each agent turn predicted from the ground-truth prefix.
pub fn run_with_gt(d: &Dialogue, backend: &mut dyn Backend, config: &SessionConfig) -> NapRun {
    let mut predictions = Vec::new();
    let mut samples = Vec::new();
    let mut transcript = d.clone();
    for (k, gt) in d.turns.iter().enumerate() {
        if gt.speaker() != Speaker::Agent {
            continue;
        }
        let outcome = BackendRequest::build(&config.system_prompt, header(d), &d.turns[..k], None, config.token_budget)
            .map_err(|e| e.to_string())
            .and_then(|req| backend.complete(&req).map_err(|e| e.to_string()))
            .and_then(|raw| parse_agent_output(&raw).map_err(|e| e.to_string()));
        let (predicted, error, text) = match outcome {
            Ok(p) => {
                let text = match &p.payload {
                    ParsedPayload::Response(t) => Some(t.clone()),
                    ParsedPayload::ToolInput(_) => None,
                };
                if Action::Agent(p.action) == gt.action() {
                    if let (Some(t), DialogueTurn::Agent { thought, payload: AgentPayload::Content(c), .. }) =
                        (&text, &mut transcript.turns[k])
                    {
                        *thought = p.thought.clone();
                        *c = t.clone();
                    }
                }
                (Some(Action::Agent(p.action)), None, text)
            }
            Err(e) => {
                log::warn!("{} turn {k}: {e}", d.dialogue_id);
                (None, Some(e), None)
            }
        };
        predictions.push(TurnPrediction { turn_index: k, expected: gt.action(), predicted, error });
        if gt.content().is_some() {
            samples.push(ResponseSample {
                turn_index: k,
                category: response_category(&d.turns, k),
                preceding_tool: k.checked_sub(1).and_then(|j| d.turns[j].tool_output().cloned()),
                response: text,
                ground_truth: gt.content().map(str::to_string),
            });
        }
    }
    NapRun { mode: NapMode::WithGt, predictions, samples, transcript }
}

/// Replays the ground-truth user turns through a live session so the agent
/// conditions on its own history and tool results.
pub fn run_without_gt(
    d: &Dialogue,
    backend: &mut dyn Backend,
    config: &SessionConfig,
    cache: &ToolCache,
) -> Result<NapRun, EvalError> {
    let tools = cache.context(&d.ecg_record_ref).map_err(|e| EvalError::Record(e.to_string()))?;
    let mut session = Session::new(d.dialogue_id.clone(), d.ecg_record_ref.clone(), tools, config.clone());
    if let Some(s) = &d.scenario {
        session = session.with_scenario(s.clone());
    }
    let mut predictions = Vec::new();
    let mut i = 0;
    while i < d.turns.len() {
        let user = &d.turns[i];
        let seg_end = (i + 1..d.turns.len()).find(|&j| d.turns[j].speaker() == Speaker::User).unwrap_or(d.turns.len());
        if user.speaker() != Speaker::User {
            // ground truth opening with an agent turn: nothing to condition on
            for k in i..seg_end {
                predictions.push(TurnPrediction {
                    turn_index: k,
                    expected: d.turns[k].action(),
                    predicted: None,
                    error: Some("no user turn".into()),
                });
            }
            i = seg_end;
            continue;
        }
        let produced = session.run_turn(backend, user.clone());
        let produced = match produced {
            Ok(t) => t,
            Err(e) => {
                log::warn!("{} user turn {i}: {e}", d.dialogue_id);
                for k in i + 1..seg_end {
                    predictions.push(TurnPrediction {
                        turn_index: k,
                        expected: d.turns[k].action(),
                        predicted: None,
                        error: Some(e.to_string()),
                    });
                }
                Vec::new()
            }
        };
        for k in i + 1..seg_end {
            if predictions.iter().any(|p: &TurnPrediction| p.turn_index == k) {
                continue;
            }
            let predicted = produced.get(k - i - 1).map(DialogueTurn::action);
            let error = predicted.is_none().then(|| "agent produced fewer turns".to_string());
            predictions.push(TurnPrediction { turn_index: k, expected: d.turns[k].action(), predicted, error });
        }
        i = seg_end;
    }
    let mut transcript = session.transcript().clone();
    transcript.scenario = d.scenario.clone();

    let own = &transcript.turns;
    let mut samples = Vec::new();
    for k in 0..own.len().max(d.turns.len()) {
        let category = response_category(&d.turns, k);
        let own_text = own.get(k).filter(|t| t.speaker() == Speaker::Agent).and_then(|t| t.content());
        if own_text.is_none() && category.is_none() {
            continue;
        }
        samples.push(ResponseSample {
            turn_index: k,
            category,
            preceding_tool: own_text.and(k.checked_sub(1)).and_then(|j| own[j].tool_output().cloned()),
            response: own_text.map(str::to_string),
            ground_truth: category.and_then(|_| d.turns[k].content().map(str::to_string)),
        });
    }
    Ok(NapRun { mode: NapMode::WithoutGt, predictions, samples, transcript })
}
