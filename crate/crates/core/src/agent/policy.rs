//! Deterministic rule policy: keyword routing to tools and a response
//! composer that only verbalizes tool output fields.

use super::backend::{Backend, BackendError};
use super::parse::{format_agent_output, ParsedPayload};
use super::prompt::{BackendRequest, HistoryEntry};
use crate::classify::{default_registry, ClassificationOutput};
use crate::dialogue::{AgentAction, UserAction};
use crate::explain::ExplanationOutput;
use crate::measure::MeasurementReport;
use crate::signal::LeadConfig;
use crate::tool::{ToolCall, ToolKind, ToolOutput, ToolStatus};

const EXPLAIN_WORDS: &[&str] = &["explain", "why", "which part", "where", "highlight", "show me", "segment"];
const MEASURE_WORDS: &[&str] = &[
    "heart rate", "bpm", "pulse", "interval", "qtc", "qt ", "pr ", "qrs", "measure", "how fast",
    "how slow", "duration", "beats", "speed",
];
const CLASSIFY_WORDS: &[&str] = &[
    "rhythm", "diagnos", "normal", "arrhythm", "fibrillation", "abnormal", "condition", "wrong", "problem",
    "finding", "classif", "disease", "irregular",
];

pub const DIRECT_RESPONSE: &str = "I can measure your heart rate and intervals, check the rhythm for common \
findings, or point to the parts of the trace behind a finding. Tell me which one you would like.";

/// Which tool, if any, an inquiry asks for.
pub fn route_inquiry(utterance: &str, lead_config: LeadConfig) -> Option<ToolKind> {
    let text = format!("{} ", utterance.to_lowercase());
    let has = |words: &[&str]| words.iter().any(|w| text.contains(w));
    if has(EXPLAIN_WORDS) {
        if lead_config.is_single_lead() {
            return Some(ToolKind::Explanation);
        }
        return Some(ToolKind::Classification);
    }
    if has(MEASURE_WORDS) {
        return Some(ToolKind::Measurement);
    }
    if has(CLASSIFY_WORDS) {
        return Some(ToolKind::Classification);
    }
    None
}

/// Registry codes mentioned as whole words.
pub fn mentioned_codes(text: &str) -> Vec<String> {
    let words: Vec<&str> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    default_registry()
        .into_iter()
        .filter(|c| words.contains(&c.code.as_str()))
        .map(|c| c.code)
        .collect()
}

fn display_name(code: &str) -> String {
    default_registry()
        .into_iter()
        .find(|c| c.code == code)
        .map_or_else(|| code.to_string(), |c| c.display_name.to_lowercase())
}

fn tool_output_of(entry: &HistoryEntry) -> Option<ToolOutput> {
    entry.action.is_tool().then(|| serde_json::from_str(&entry.text).ok()).flatten()
}

pub fn compose_measurement(m: &MeasurementReport) -> String {
    let mut parts = Vec::new();
    if let Some(hr) = m.heart_rate_bpm {
        parts.push(format!("Your heart rate is {:.0} bpm, measured over {} beats.", hr, m.beat_count));
    }
    let intervals: Vec<String> = [
        ("PR interval", m.pr_interval_ms),
        ("QRS duration", m.qrs_duration_ms),
        ("QT interval", m.qt_interval_ms),
        ("QTc (Bazett)", m.qtc_interval_ms),
    ]
    .into_iter()
    .filter_map(|(name, v)| v.map(|v| format!("{name} {v:.0} ms")))
    .collect();
    if !intervals.is_empty() {
        parts.push(format!("{}.", intervals.join(", ")));
    }
    if m.pr_interval_ms.is_none() {
        parts.push("The P wave could not be measured reliably.".into());
    }
    if m.qt_interval_ms.is_none() {
        parts.push("The T wave could not be measured reliably.".into());
    }
    parts.join(" ")
}

pub fn compose_classification(c: &ClassificationOutput) -> String {
    if c.predicted.is_empty() {
        return "The classifier did not flag any of the findings it checks for.".into();
    }
    let items: Vec<String> = c
        .predicted
        .iter()
        .map(|code| format!("{} ({code})", display_name(code)))
        .collect();
    format!("The classifier found: {}.", items.join(", "))
}

pub fn compose_explanation(e: &ExplanationOutput) -> String {
    let Some(top) = e.top_interval() else {
        return format!("No segment stood out as supporting the {} finding.", e.class_code);
    };
    let mut s = format!(
        "The {} ({}) finding is supported most by the segment from {:.3} s to {:.3} s.",
        display_name(&e.class_code),
        e.class_code,
        top.start_s,
        top.end_s
    );
    let others: Vec<String> = e
        .intervals
        .iter()
        .filter(|i| !std::ptr::eq(*i, top))
        .map(|i| format!("{:.3} s to {:.3} s", i.start_s, i.end_s))
        .collect();
    if !others.is_empty() {
        s.push_str(&format!(" Other contributing segments: {}.", others.join(", ")));
    }
    if let Some((lo, hi)) = e.frequency_band_hz {
        s.push_str(&format!(" The most informative frequency band is {lo:.0} Hz to {hi:.0} Hz."));
    }
    s
}

/// Verbalizes a valid tool output.
pub fn compose_response(output: &ToolOutput) -> String {
    if let Some(m) = output.measurement() {
        compose_measurement(m)
    } else if let Some(c) = output.classification() {
        compose_classification(c)
    } else if let Some(e) = output.explanation() {
        compose_explanation(e)
    } else {
        compose_failure(output)
    }
}

pub fn compose_failure(output: &ToolOutput) -> String {
    let reason = match output.status() {
        ToolStatus::Invalid(r) => r.as_str(),
        ToolStatus::Valid => "unknown",
    };
    format!(
        "I could not get a reliable {} result from this recording (reason: {reason}). \
A cleaner or longer recording may help.",
        output.tool()
    )
}

/// Further detail from an earlier tool output, answering a follow-up.
pub fn compose_follow_up(previous: Option<&ToolOutput>) -> String {
    let generic = "I do not have more detail than what I already told you. You can ask me to measure, \
classify or explain the recording.";
    let Some(out) = previous.filter(|o| o.is_valid()) else {
        return generic.into();
    };
    if let Some(m) = out.measurement() {
        let mut parts = Vec::new();
        if let (Some(mean), Some(std)) = (m.rr_mean_ms, m.rr_std_ms) {
            parts.push(format!(
                "The average time between beats is {mean:.0} ms and it varies by {std:.0} ms from beat to beat."
            ));
        }
        if let Some(st) = m.st_level_mv {
            parts.push(format!("The ST segment sits at {st:.2} mV relative to baseline."));
        }
        if parts.is_empty() {
            return generic.into();
        }
        return parts.join(" ");
    }
    if let Some(c) = out.classification() {
        return match c.predicted.len() {
            0 => "None of the checked findings passed the decision threshold.".into(),
            _ => format!(
                "Only these findings passed the decision threshold: {}. Everything else the classifier checks was below it.",
                c.predicted.join(", ")
            ),
        };
    }
    if let Some(e) = out.explanation() {
        let spans: Vec<String> = e
            .intervals
            .iter()
            .map(|i| format!("{:.3} s to {:.3} s", i.start_s, i.end_s))
            .collect();
        if spans.is_empty() {
            return generic.into();
        }
        return format!("The highlighted segments for {} are {}.", e.class_code, spans.join(", "));
    }
    generic.into()
}

/// Backend that answers with the rule policy.
#[derive(Debug, Clone, Default)]
pub struct RulePolicyBackend;

impl RulePolicyBackend {
    pub fn decide(&self, req: &BackendRequest) -> (AgentAction, String, ParsedPayload) {
        if let Some(last) = req.current_exchange.last() {
            return match tool_output_of(last) {
                Some(out) if out.is_valid() => (
                    AgentAction::Response,
                    format!("verbalize the {} output", out.tool()),
                    ParsedPayload::Response(compose_response(&out)),
                ),
                Some(out) => (
                    AgentAction::ResponseFail,
                    format!("the {} tool returned an invalid output", out.tool()),
                    ParsedPayload::Response(compose_failure(&out)),
                ),
                None => (
                    AgentAction::ResponseFail,
                    "the tool output is unreadable".into(),
                    ParsedPayload::Response("I could not read the tool result.".into()),
                ),
            };
        }
        match req.user_action {
            UserAction::UserBye => (
                AgentAction::SystemBye,
                "the user is leaving".into(),
                ParsedPayload::Response("Goodbye, and take care.".into()),
            ),
            UserAction::RequestFollowUp => {
                let previous = req.history.iter().rev().find_map(tool_output_of);
                (
                    AgentAction::ResponseFollowUp,
                    "answer the follow-up from earlier tool results".into(),
                    ParsedPayload::Response(compose_follow_up(previous.as_ref())),
                )
            }
            UserAction::EcgInquiry => match route_inquiry(&req.user_utterance, req.header.lead_config) {
                Some(ToolKind::Explanation) => {
                    let code = mentioned_codes(&req.user_utterance).into_iter().next().or_else(|| {
                        req.history.iter().rev().find_map(tool_output_of).and_then(|o| {
                            o.classification().and_then(|c| c.predicted.iter().find(|p| *p != "SR").cloned())
                        })
                    });
                    (
                        AgentAction::CallExplanation,
                        "the user wants to know what in the trace supports a finding".into(),
                        ParsedPayload::ToolInput(ToolCall::explain(code)),
                    )
                }
                Some(tool) => (
                    AgentAction::for_tool(tool),
                    format!("the inquiry needs the {tool} tool"),
                    ParsedPayload::ToolInput(ToolCall::new(tool)),
                ),
                None => (
                    AgentAction::Response,
                    "general question, no tool needed".into(),
                    ParsedPayload::Response(DIRECT_RESPONSE.into()),
                ),
            },
        }
    }
}

impl Backend for RulePolicyBackend {
    fn id(&self) -> &str {
        "rule-policy"
    }

    fn complete(&mut self, request: &BackendRequest) -> Result<String, BackendError> {
        let (action, thought, payload) = self.decide(request);
        Ok(format_agent_output(action, &thought, &payload))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::measurement_tool_call;
    use crate::signal::synthesize_ecg;

    #[test]
    fn routing() {
        assert_eq!(route_inquiry("What is my heart rate?", LeadConfig::LeadI), Some(ToolKind::Measurement));
        assert_eq!(route_inquiry("Is my rhythm normal?", LeadConfig::LeadI), Some(ToolKind::Classification));
        assert_eq!(route_inquiry("Why PVC?", LeadConfig::LeadI), Some(ToolKind::Explanation));
        assert_eq!(route_inquiry("Why PVC?", LeadConfig::TwelveLead), Some(ToolKind::Classification));
        assert_eq!(route_inquiry("Hello there", LeadConfig::LeadI), None);
        assert_eq!(mentioned_codes("is this a PVC or PAC?"), ["PAC", "PVC"]);
    }

    #[test]
    fn measurement_text_uses_tool_values() {
        let (rec, _) = synthesize_ecg(75.0, 10.0, 500.0, 0.0, 3).unwrap();
        let out = measurement_tool_call(&rec);
        let text = compose_response(&out);
        let hr = out.measurement().unwrap().heart_rate_bpm.unwrap();
        assert!(text.contains(&format!("{hr:.0} bpm")), "{text}");
    }
}
