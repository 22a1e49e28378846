//! Line-tagged agent output:
//!
//! ```text
//! Action: measurement
//! Thought: the user asks for their heart rate
//! ToolInput: {}
//! ```
//!
//! Non-tool actions end with `Response: <text>` instead. A tag's value runs
//! until the next tag line, so responses may span lines.

use crate::dialogue::AgentAction;
use crate::tool::ToolCall;

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedPayload {
    ToolInput(ToolCall),
    Response(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub action: AgentAction,
    pub thought: String,
    pub payload: ParsedPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing Action line")]
    MissingAction,
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("missing or empty Thought")]
    MissingThought,
    #[error("tag {0} appears more than once")]
    DuplicateTag(&'static str),
    #[error("text outside any tag: `{0}`")]
    UntaggedText(String),
    #[error("{action} needs a {expected} line")]
    MissingPayload { action: &'static str, expected: &'static str },
    #[error("{action} cannot carry a {found} line")]
    PayloadMismatch { action: &'static str, found: &'static str },
    #[error("malformed tool arguments: {0}")]
    MalformedArguments(String),
    #[error("empty response text")]
    EmptyResponse,
}

const TAGS: [&str; 4] = ["Action", "Thought", "ToolInput", "Response"];

fn split_tag(line: &str) -> Option<(usize, &str)> {
    TAGS.iter().enumerate().find_map(|(i, tag)| {
        line.strip_prefix(tag)
            .and_then(|rest| rest.strip_prefix(':'))
            .map(|rest| (i, rest.strip_prefix(' ').unwrap_or(rest)))
    })
}

pub fn parse_agent_output(raw: &str) -> Result<ParsedOutput, ParseError> {
    let mut values: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in raw.lines() {
        if let Some((i, rest)) = split_tag(line) {
            if values[i].is_some() {
                return Err(ParseError::DuplicateTag(TAGS[i]));
            }
            values[i] = Some(rest.to_string());
            current = Some(i);
        } else if let Some(i) = current {
            let v = values[i].as_mut().expect("current tag has a value");
            v.push('\n');
            v.push_str(line);
        } else if !line.trim().is_empty() {
            return Err(ParseError::UntaggedText(line.trim().to_string()));
        }
    }
    let [action, thought, tool_input, response] = values.map(|v| v.map(|s| s.trim().to_string()));

    let tag = action.ok_or(ParseError::MissingAction)?;
    let action = AgentAction::from_tag(&tag).ok_or(ParseError::UnknownAction(tag))?;
    let thought = thought.filter(|t| !t.is_empty()).ok_or(ParseError::MissingThought)?;
    let payload = match action.tool() {
        Some(kind) => {
            if response.is_some() {
                return Err(ParseError::PayloadMismatch { action: action.tag(), found: "Response" });
            }
            let text = tool_input.ok_or(ParseError::MissingPayload {
                action: action.tag(),
                expected: "ToolInput",
            })?;
            let args: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| ParseError::MalformedArguments(e.to_string()))?;
            ParsedPayload::ToolInput(ToolCall::from_arguments(kind, &args).map_err(ParseError::MalformedArguments)?)
        }
        None => {
            if tool_input.is_some() {
                return Err(ParseError::PayloadMismatch { action: action.tag(), found: "ToolInput" });
            }
            let text = response.ok_or(ParseError::MissingPayload {
                action: action.tag(),
                expected: "Response",
            })?;
            if text.is_empty() {
                return Err(ParseError::EmptyResponse);
            }
            ParsedPayload::Response(text)
        }
    };
    Ok(ParsedOutput { action, thought, payload })
}

/// Renders output in the format [`parse_agent_output`] reads.
pub fn format_agent_output(action: AgentAction, thought: &str, payload: &ParsedPayload) -> String {
    match payload {
        ParsedPayload::ToolInput(call) => {
            format!("Action: {}\nThought: {}\nToolInput: {}", action.tag(), thought, call.arguments())
        }
        ParsedPayload::Response(text) => format!("Action: {}\nThought: {}\nResponse: {}", action.tag(), thought, text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tool::ToolKind;

    #[test]
    fn measurement_call() {
        let out = parse_agent_output("Action: measurement\nThought: user asks heart rate\nToolInput: {}").unwrap();
        assert_eq!(out.action, AgentAction::CallMeasurement);
        assert_eq!(out.thought, "user asks heart rate");
        assert_eq!(out.payload, ParsedPayload::ToolInput(ToolCall::new(ToolKind::Measurement)));
    }

    #[test]
    fn missing_action() {
        let err = parse_agent_output("Thought: ...\nResponse: Your heart rate is 75 bpm.").unwrap_err();
        assert_eq!(err, ParseError::MissingAction);
    }

    #[test]
    fn plain_response() {
        let out = parse_agent_output("Action: response\nThought: t\nResponse: text").unwrap();
        assert_eq!(out.action, AgentAction::Response);
        assert_eq!(out.thought, "t");
        assert_eq!(out.payload, ParsedPayload::Response("text".into()));
    }

    #[test]
    fn multi_line_response_and_blank_lead_in() {
        let out = parse_agent_output("\n\nAction: response_follow_up\nThought: t\nResponse: line one\nline two\n").unwrap();
        assert_eq!(out.payload, ParsedPayload::Response("line one\nline two".into()));
    }

    #[test]
    fn rejections() {
        use ParseError as E;
        let cases = [
            ("Action: respond\nThought: t\nResponse: x", "unknown"),
            ("Action: response\nResponse: x", "thought"),
            ("Action: response\nThought: t\nToolInput: {}", "mismatch"),
            ("Action: measurement\nThought: t\nResponse: 75 bpm", "mismatch"),
            ("Action: explanation\nThought: t\nToolInput: {class_code: PVC}", "args"),
            ("Action: measurement\nThought: t\nToolInput: {\"lead\": \"II\"}", "args"),
            ("Action: measurement\nThought: t", "payload"),
            ("hello\nAction: response\nThought: t\nResponse: x", "untagged"),
            ("Action: response\nAction: response\nThought: t\nResponse: x", "dup"),
            ("Action: Response\nThought: t\nResponse: x", "unknown"),
        ];
        for (raw, kind) in cases {
            let err = parse_agent_output(raw).unwrap_err();
            let ok = match kind {
                "unknown" => matches!(err, E::UnknownAction(_)),
                "thought" => err == E::MissingThought,
                "mismatch" => matches!(err, E::PayloadMismatch { .. }),
                "args" => matches!(err, E::MalformedArguments(_)),
                "payload" => matches!(err, E::MissingPayload { .. }),
                "untagged" => matches!(err, E::UntaggedText(_)),
                "dup" => matches!(err, E::DuplicateTag("Action")),
                _ => false,
            };
            assert!(ok, "{raw:?} gave {err:?}");
        }
    }

    #[test]
    fn format_round_trips() {
        let p = ParsedPayload::ToolInput(ToolCall::explain(Some("PVC".into())));
        let raw = format_agent_output(AgentAction::CallExplanation, "why", &p);
        let back = parse_agent_output(&raw).unwrap();
        assert_eq!((back.action, back.thought.as_str(), back.payload), (AgentAction::CallExplanation, "why", p));
    }
}
