//! Typed tool calls and outputs shared by the tools, the agent and the corpus.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::classify::ClassificationOutput;
use crate::explain::ExplanationOutput;
use crate::measure::MeasurementReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Classification,
    Measurement,
    Explanation,
}

impl ToolKind {
    pub const ALL: [ToolKind; 3] = [ToolKind::Classification, ToolKind::Measurement, ToolKind::Explanation];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolKind::Classification => "classification",
            ToolKind::Measurement => "measurement",
            ToolKind::Explanation => "explanation",
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown tool `{s}`"))
    }
}

/// A tool invocation. Only explanation takes an argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_code: Option<String>,
}

impl ToolCall {
    pub fn new(tool: ToolKind) -> Self {
        ToolCall { tool, class_code: None }
    }

    pub fn explain(class_code: Option<String>) -> Self {
        ToolCall {
            tool: ToolKind::Explanation,
            class_code,
        }
    }

    /// Argument object as written after `ToolInput:`.
    pub fn arguments(&self) -> Value {
        match &self.class_code {
            Some(c) => serde_json::json!({ "class_code": c }),
            None => serde_json::json!({}),
        }
    }

    /// Inverse of [`ToolCall::arguments`]. Only explanation accepts a key.
    pub fn from_arguments(tool: ToolKind, args: &Value) -> Result<Self, String> {
        let map = args
            .as_object()
            .ok_or_else(|| format!("tool arguments must be an object, got {args}"))?;
        let mut class_code = None;
        for (key, value) in map {
            match (tool, key.as_str()) {
                (ToolKind::Explanation, "class_code") => {
                    let code = value
                        .as_str()
                        .filter(|c| !c.is_empty())
                        .ok_or_else(|| "class_code must be a non-empty string".to_string())?;
                    class_code = Some(code.to_string());
                }
                _ => return Err(format!("unexpected argument `{key}` for {tool} tool")),
            }
        }
        Ok(ToolCall { tool, class_code })
    }
}

/// `"valid"` or `{"invalid": reason}` when embedded in tool bodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Valid,
    Invalid(String),
}

impl ToolStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, ToolStatus::Valid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ToolBody {
    Classification(ClassificationOutput),
    Measurement(MeasurementReport),
    Explanation(ExplanationOutput),
}

impl ToolBody {
    pub fn kind(&self) -> ToolKind {
        match self {
            ToolBody::Classification(_) => ToolKind::Classification,
            ToolBody::Measurement(_) => ToolKind::Measurement,
            ToolBody::Explanation(_) => ToolKind::Explanation,
        }
    }
}

/// Result of one tool call. Invalid outputs never carry a body.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    tool: ToolKind,
    status: ToolStatus,
    body: Option<ToolBody>,
}

impl ToolOutput {
    pub fn valid(body: ToolBody) -> Self {
        ToolOutput {
            tool: body.kind(),
            status: ToolStatus::Valid,
            body: Some(body),
        }
    }

    pub fn invalid(tool: ToolKind, reason: impl Into<String>) -> Self {
        ToolOutput {
            tool,
            status: ToolStatus::Invalid(reason.into()),
            body: None,
        }
    }

    pub fn tool(&self) -> ToolKind {
        self.tool
    }

    pub fn status(&self) -> &ToolStatus {
        &self.status
    }

    pub fn is_valid(&self) -> bool {
        self.status.is_valid()
    }

    pub fn body(&self) -> Option<&ToolBody> {
        self.body.as_ref()
    }

    pub fn measurement(&self) -> Option<&MeasurementReport> {
        match &self.body {
            Some(ToolBody::Measurement(m)) => Some(m),
            _ => None,
        }
    }

    pub fn classification(&self) -> Option<&ClassificationOutput> {
        match &self.body {
            Some(ToolBody::Classification(c)) => Some(c),
            _ => None,
        }
    }

    pub fn explanation(&self) -> Option<&ExplanationOutput> {
        match &self.body {
            Some(ToolBody::Explanation(e)) => Some(e),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WireStatus {
    Valid,
    Invalid,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    tool: ToolKind,
    status: WireStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    body: Value,
}

impl Serialize for ToolOutput {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error;
        let body = match &self.body {
            None => Value::Null,
            Some(ToolBody::Classification(c)) => serde_json::to_value(c).map_err(S::Error::custom)?,
            Some(ToolBody::Measurement(m)) => serde_json::to_value(m).map_err(S::Error::custom)?,
            Some(ToolBody::Explanation(e)) => serde_json::to_value(e).map_err(S::Error::custom)?,
        };
        let (status, reason) = match &self.status {
            ToolStatus::Valid => (WireStatus::Valid, None),
            ToolStatus::Invalid(r) => (WireStatus::Invalid, Some(r.clone())),
        };
        Wire {
            tool: self.tool,
            status,
            reason,
            body,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ToolOutput {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = Wire::deserialize(d)?;
        match wire.status {
            WireStatus::Invalid => {
                if !wire.body.is_null() {
                    return Err(D::Error::custom("invalid tool output must have a null body"));
                }
                let reason = wire
                    .reason
                    .ok_or_else(|| D::Error::custom("invalid tool output needs a reason"))?;
                Ok(ToolOutput::invalid(wire.tool, reason))
            }
            WireStatus::Valid => {
                if wire.reason.is_some() {
                    return Err(D::Error::custom("valid tool output cannot carry a reason"));
                }
                let body = match wire.tool {
                    ToolKind::Classification => {
                        ToolBody::Classification(serde_json::from_value(wire.body).map_err(D::Error::custom)?)
                    }
                    ToolKind::Measurement => {
                        ToolBody::Measurement(serde_json::from_value(wire.body).map_err(D::Error::custom)?)
                    }
                    ToolKind::Explanation => {
                        ToolBody::Explanation(serde_json::from_value(wire.body).map_err(D::Error::custom)?)
                    }
                };
                Ok(ToolOutput::valid(body))
            }
        }
    }
}
