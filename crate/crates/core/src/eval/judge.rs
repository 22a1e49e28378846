//! Judges for faithfulness, response quality and dialogue quality.
//!
//! Rule rubric (artifact-defined): 5 = all claims match, 4 = match within
//! tolerance with at most one omission, 3 = partial, 2 = mostly wrong,
//! 1 = contradiction or no overlap.

use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::claims::{extract_claims, tool_claims, unsupported, Claims, Tolerance};
use crate::agent::{chat_complete, ChatBackendConfig};
use crate::classify::{Transport, UreqTransport};
use crate::dialogue::{Action, AgentAction, Cefr, Dialogue, Speaker};
use crate::mtd::find_terms;
use crate::tool::ToolOutput;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeVerdict {
    pub accuracy: u8,
    pub completeness: u8,
    pub rationale: String,
}

impl JudgeVerdict {
    pub fn check(&self) -> Result<(), JudgeError> {
        for (name, v) in [("accuracy", self.accuracy), ("completeness", self.completeness)] {
            if !(1..=5).contains(&v) {
                return Err(JudgeError::Schema(format!("{name} {v} outside 1..=5")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityVerdict {
    pub naturalness: u8,
    pub cefr_adherence: u8,
}

/// Reference answer for one turn.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub text: String,
    pub claims: Claims,
}

impl GroundTruth {
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        GroundTruth { claims: extract_claims(&text), text }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
    #[error("judge answer violates the schema: {0}")]
    Schema(String),
    #[error("{0}")]
    Input(String),
}

pub trait Judge: Send + Sync {
    fn id(&self) -> &str;
    /// Whether `response` says only what `output` supports.
    fn faithful(&self, output: &ToolOutput, response: &str) -> Result<bool, JudgeError>;
    fn judge_response(&self, response: &str, ground_truth: &GroundTruth) -> Result<JudgeVerdict, JudgeError>;
    fn dialogue_quality(&self, dialogue: &Dialogue) -> Result<QualityVerdict, JudgeError>;
    fn tolerance(&self) -> Tolerance {
        Tolerance::default()
    }
}

/// Deterministic reference judge.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge {
    pub tolerance: Tolerance,
}

impl RuleJudge {
    pub fn with_tolerance(tolerance: Tolerance) -> Self {
        RuleJudge { tolerance }
    }
}

fn content_words(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 3)
        .map(str::to_string)
        .collect()
}

fn bucket(x: f64) -> u8 {
    match x {
        x if x >= 0.8 => 5,
        x if x >= 0.6 => 4,
        x if x >= 0.4 => 3,
        x if x >= 0.2 => 2,
        _ => 1,
    }
}

/// Rubric for responses whose reference has no claims: word overlap, capped
/// at 3 when the response asserts claims.
fn judge_plain(response: &str, claims: &Claims, gt: &GroundTruth) -> JudgeVerdict {
    let (a, b) = (content_words(response), content_words(&gt.text));
    let union = a.union(&b).count();
    let jaccard = if union == 0 { 1.0 } else { a.intersection(&b).count() as f64 / union as f64 };
    let recall = if b.is_empty() { 1.0 } else { a.intersection(&b).count() as f64 / b.len() as f64 };
    let cap = if claims.is_empty() { 5 } else { 3 };
    JudgeVerdict {
        accuracy: bucket(jaccard).min(cap),
        completeness: bucket(recall),
        rationale: format!("no reference claims; word overlap {jaccard:.2}, recall {recall:.2}"),
    }
}

pub fn rule_verdict(response: &str, gt: &GroundTruth) -> JudgeVerdict {
    rule_verdict_within(response, gt, &Tolerance::default())
}

pub fn rule_verdict_within(response: &str, gt: &GroundTruth, tol: &Tolerance) -> JudgeVerdict {
    let r = extract_claims(response);
    if gt.claims.is_empty() {
        return judge_plain(response, &r, gt);
    }
    let g = &gt.claims;
    let mut exact = 0;
    let mut agreeing = 0;
    for v in &r.values {
        if g.values.iter().any(|t| v.exact(t)) {
            exact += 1;
            agreeing += 1;
        } else if g.values.iter().any(|t| v.agrees_within(t, tol)) {
            agreeing += 1;
        }
    }
    let label_hits = r.labels.intersection(&g.labels).count();
    exact += label_hits;
    agreeing += label_hits;
    let n_resp = r.len();
    let covered = g.values.iter().filter(|t| r.values.iter().any(|v| v.agrees_within(t, tol))).count()
        + g.labels.intersection(&r.labels).count();
    let n_gt = g.len();
    let omissions = n_gt - covered;

    let precision = if n_resp == 0 { 0.0 } else { agreeing as f64 / n_resp as f64 };
    let accuracy = match () {
        _ if agreeing == 0 => 1,
        _ if exact == n_resp => 5,
        _ if agreeing == n_resp => 4,
        _ if precision >= 0.5 => 3,
        _ => 2,
    };
    let recall = covered as f64 / n_gt as f64;
    let completeness = match () {
        _ if omissions == 0 => 5,
        _ if omissions <= 1 && recall >= 0.75 => 4,
        _ if recall >= 0.5 => 3,
        _ if covered > 0 => 2,
        _ => 1,
    };
    JudgeVerdict {
        accuracy,
        completeness,
        rationale: format!(
            "{agreeing}/{n_resp} response claims agree ({exact} exact); {covered}/{n_gt} reference claims covered"
        ),
    }
}

/// Breaks of user/agent alternation: an agent opening, two user turns in a
/// row, or two agent text turns in a row.
pub fn alternation_violations(d: &Dialogue) -> usize {
    let mut n = 0;
    if d.turns.first().is_some_and(|t| t.speaker() == Speaker::Agent) {
        n += 1;
    }
    let text_turn = |a: Action| matches!(a, Action::Agent(x) if !x.is_tool());
    for w in d.turns.windows(2) {
        let (a, b) = (w[0].action(), w[1].action());
        if w[0].speaker() == Speaker::User && w[1].speaker() == Speaker::User {
            n += 1;
        }
        if text_turn(a) && text_turn(b) {
            n += 1;
        }
        if a == Action::Agent(AgentAction::SystemBye) {
            n += 1;
        }
    }
    n
}

/// Share of vocabulary terms in user turns at or below `level`, bucketed.
pub fn cefr_rule_score(d: &Dialogue, level: Cefr) -> u8 {
    let terms: Vec<Cefr> = d
        .turns
        .iter()
        .filter(|t| t.speaker() == Speaker::User)
        .flat_map(|t| find_terms(t.content().unwrap_or_default()))
        .map(|(_, tier)| tier)
        .collect();
    if terms.is_empty() {
        return 5;
    }
    let ok = terms.iter().filter(|t| **t <= level).count() as f64 / terms.len() as f64;
    match ok {
        x if x >= 1.0 => 5,
        x if x >= 0.8 => 4,
        x if x >= 0.6 => 3,
        x if x >= 0.4 => 2,
        _ => 1,
    }
}

impl Judge for RuleJudge {
    fn id(&self) -> &str {
        "rule"
    }

    fn faithful(&self, output: &ToolOutput, response: &str) -> Result<bool, JudgeError> {
        let (values, labels) = unsupported(&extract_claims(response), &tool_claims(output), &self.tolerance);
        Ok(values.is_empty() && labels.is_empty())
    }

    fn judge_response(&self, response: &str, ground_truth: &GroundTruth) -> Result<JudgeVerdict, JudgeError> {
        let v = rule_verdict_within(response, ground_truth, &self.tolerance);
        v.check()?;
        Ok(v)
    }

    fn tolerance(&self) -> Tolerance {
        self.tolerance
    }

    fn dialogue_quality(&self, dialogue: &Dialogue) -> Result<QualityVerdict, JudgeError> {
        let level = dialogue
            .scenario
            .as_ref()
            .map(|s| s.cefr)
            .ok_or_else(|| JudgeError::Input(format!("{} has no scenario to take a CEFR level from", dialogue.dialogue_id)))?;
        let naturalness = match alternation_violations(dialogue) {
            0 => {
                let user: Vec<&str> = dialogue
                    .turns
                    .iter()
                    .filter(|t| t.speaker() == Speaker::User)
                    .filter_map(|t| t.content())
                    .collect();
                let distinct: BTreeSet<&str> = user.iter().copied().collect();
                if distinct.len() < user.len() {
                    4
                } else {
                    5
                }
            }
            1 => 2,
            _ => 1,
        };
        Ok(QualityVerdict { naturalness, cefr_adherence: cefr_rule_score(dialogue, level) })
    }
}

/// Judge backed by an OpenAI-compatible chat endpoint. Calls are spaced by
/// at least `min_interval`.
pub struct LlmJudge {
    config: ChatBackendConfig,
    transport: Box<dyn Transport>,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
}

const FAITHFUL_PROMPT: &str = "You check whether an ECG assistant's response is grounded in the tool output \
that precedes it. Answer 1 only if every value and diagnosis in the response appears in the tool output, \
else 0. Reply with JSON {\"faithful\": 0 or 1}.";
const RESPONSE_PROMPT: &str = "You grade an ECG assistant's response against a ground-truth response on a \
5-point scale where 1 is the least score and 5 the best. Accuracy is how well the response matches the \
ground truth. Completeness is how much of the key information in the ground truth the response covers. \
Reply with JSON {\"accuracy\": 1-5, \"completeness\": 1-5, \"rationale\": \"...\"}.";
const QUALITY_PROMPT: &str = "You grade a dialogue between a user and an ECG assistant on a 5-point scale \
where 1 is the least score and 5 the best. Naturalness is human-like conversational flow. CEFR adherence is \
how well the user's language fits the stated CEFR level. Reply with JSON {\"naturalness\": 1-5, \
\"cefr_adherence\": 1-5}.";

impl LlmJudge {
    pub fn new(config: ChatBackendConfig, min_interval: Duration) -> Self {
        Self::with_transport(config, Box::new(UreqTransport), min_interval)
    }

    pub fn with_transport(config: ChatBackendConfig, transport: Box<dyn Transport>, min_interval: Duration) -> Self {
        LlmJudge { config, transport, min_interval, last_call: Mutex::new(None) }
    }

    fn ask(&self, system: &str, user: String) -> Result<Json, JudgeError> {
        {
            let mut last = self.last_call.lock().unwrap();
            if let Some(t) = *last {
                let wait = self.min_interval.saturating_sub(t.elapsed());
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            *last = Some(Instant::now());
        }
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": user },
            ],
        });
        let raw = chat_complete(self.transport.as_ref(), &self.config, &body)
            .map_err(|e| JudgeError::Unavailable(e.to_string()))?;
        let t = raw.trim();
        let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
        let t = t.strip_suffix("```").unwrap_or(t).trim();
        serde_json::from_str(t).map_err(|e| JudgeError::Schema(format!("{e}: {raw}")))
    }
}

fn score(v: &Json, key: &str) -> Result<u8, JudgeError> {
    v.get(key)
        .and_then(Json::as_u64)
        .filter(|s| (1..=5).contains(s))
        .map(|s| s as u8)
        .ok_or_else(|| JudgeError::Schema(format!("`{key}` must be an integer in 1..=5, got {v}")))
}

impl Judge for LlmJudge {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn faithful(&self, output: &ToolOutput, response: &str) -> Result<bool, JudgeError> {
        let tool = serde_json::to_string(output).unwrap_or_default();
        let v = self.ask(FAITHFUL_PROMPT, format!("Tool output:\n{tool}\n\nResponse:\n{response}"))?;
        match v.get("faithful").and_then(Json::as_u64) {
            Some(0) => Ok(false),
            Some(1) => Ok(true),
            _ => Err(JudgeError::Schema(format!("`faithful` must be 0 or 1, got {v}"))),
        }
    }

    fn judge_response(&self, response: &str, ground_truth: &GroundTruth) -> Result<JudgeVerdict, JudgeError> {
        let v = self.ask(RESPONSE_PROMPT, format!("Ground truth:\n{}\n\nResponse:\n{response}", ground_truth.text))?;
        let verdict: JudgeVerdict =
            serde_json::from_value(v.clone()).map_err(|e| JudgeError::Schema(format!("{e}: {v}")))?;
        verdict.check()?;
        Ok(verdict)
    }

    fn dialogue_quality(&self, dialogue: &Dialogue) -> Result<QualityVerdict, JudgeError> {
        let level = dialogue.scenario.as_ref().map_or("unknown", |s| s.cefr.as_str());
        let lines: Vec<String> = dialogue
            .turns
            .iter()
            .filter_map(|t| t.content().map(|c| format!("{:?} [{}]: {c}", t.speaker(), t.action())))
            .collect();
        let v = self.ask(QUALITY_PROMPT, format!("CEFR level: {level}\n\n{}", lines.join("\n")))?;
        Ok(QualityVerdict { naturalness: score(&v, "naturalness")?, cefr_adherence: score(&v, "cefr_adherence")? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::MockTransport;
    use crate::dialogue::{DialogueTurn, Scenario, Topic, UserAction};
    use crate::signal::LeadConfig;

    #[test]
    fn rubric_buckets() {
        let gt = GroundTruth::from_text("Your heart rate is 72 bpm. The classifier found: premature ventricular contraction (PVC).");
        assert_eq!(rule_verdict("Heart rate 72 bpm, and a PVC.", &gt).accuracy, 5);
        assert_eq!(rule_verdict("Heart rate 74 bpm, and a PVC.", &gt).accuracy, 4);
        assert_eq!(rule_verdict("Nothing to report.", &gt).accuracy, 1);
        assert_eq!(rule_verdict("Heart rate 130 bpm with AFIB.", &gt).accuracy, 1);
        let v = rule_verdict("Heart rate 72 bpm.", &gt);
        assert_eq!((v.accuracy, v.completeness), (5, 3));
    }

    #[test]
    fn llm_judge_schema_is_enforced() {
        let reply = |content: &str| json!({ "choices": [{ "message": { "content": content } }] });
        let ok = LlmJudge::with_transport(
            ChatBackendConfig::new("http://mock", "judge-m"),
            Box::new(MockTransport::fixed(reply(r#"{"accuracy": 4, "completeness": 3, "rationale": "close"}"#))),
            Duration::ZERO,
        );
        let v = ok.judge_response("x", &GroundTruth::from_text("y")).unwrap();
        assert_eq!((v.accuracy, v.completeness), (4, 3));
        let bad = LlmJudge::with_transport(
            ChatBackendConfig::new("http://mock", "judge-m"),
            Box::new(MockTransport::fixed(reply(r#"{"accuracy": 7, "completeness": 3, "rationale": ""}"#))),
            Duration::ZERO,
        );
        assert!(matches!(bad.judge_response("x", &GroundTruth::default()), Err(JudgeError::Schema(_))));
    }

    #[test]
    fn naturalness_penalizes_alternation_breaks() {
        let mut d = Dialogue {
            dialogue_id: "q".into(),
            scenario: Some(Scenario { topic: Topic::DeviceUsage, cefr: Cefr::A, action_sequence_id: "seq-04".into() }),
            lead_config: LeadConfig::LeadI,
            ecg_record_ref: "synth:normal:hr=70:seed=1:lead=lead_i".into(),
            turns: vec![
                DialogueTurn::user(UserAction::EcgInquiry, "What can you tell me about this heart test?"),
                DialogueTurn::agent(AgentAction::Response, "general", "It records your heart."),
                DialogueTurn::user(UserAction::UserBye, "Thank you, bye."),
                DialogueTurn::agent(AgentAction::SystemBye, "bye", "Bye."),
            ],
        };
        assert_eq!(RuleJudge::default().dialogue_quality(&d).unwrap().naturalness, 5);
        d.turns.insert(1, DialogueTurn::user(UserAction::EcgInquiry, "Hello?"));
        assert!(RuleJudge::default().dialogue_quality(&d).unwrap().naturalness <= 2);
    }
}
