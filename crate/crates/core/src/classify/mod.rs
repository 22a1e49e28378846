//! Classification tool: registries, the classifier interface, a rule-based
//! reference classifier and an adapter for externally served models.

mod external;
mod registry;
mod rules;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::signal::EcgRecord;
use crate::tool::{ToolBody, ToolKind, ToolOutput, ToolStatus};

pub use external::{
    attach_external_classifier, EndpointDescriptor, ExternalClassifier, MockTransport, Transport, TransportError,
    UreqTransport,
};
pub use registry::{
    class_registry, default_registry, filter_registry, load_registry, parse_registry, validate_registry,
    DiagnosticClass, RegistryError,
};
pub use rules::{rule_scores, RuleClassifier, SCORE_HIGH, SCORE_LOW};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutput {
    pub scores: BTreeMap<String, f64>,
    pub predicted: Vec<String>,
    pub threshold: f64,
    pub status: ToolStatus,
    /// Rule (or model) responsible for each predicted code.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fired: BTreeMap<String, String>,
}

impl ClassificationOutput {
    pub fn invalid(threshold: f64, reason: impl Into<String>) -> Self {
        ClassificationOutput {
            scores: BTreeMap::new(),
            predicted: Vec::new(),
            threshold,
            status: ToolStatus::Invalid(reason.into()),
            fired: BTreeMap::new(),
        }
    }

    /// Builds a valid output, deriving `predicted` in registry order.
    pub fn from_scores(
        scores: BTreeMap<String, f64>,
        registry: &[DiagnosticClass],
        threshold: f64,
        fired: BTreeMap<String, String>,
    ) -> Self {
        let predicted = registry
            .iter()
            .filter(|c| scores.get(&c.code).is_some_and(|&s| s >= threshold))
            .map(|c| c.code.clone())
            .collect();
        ClassificationOutput {
            scores,
            predicted,
            threshold,
            status: ToolStatus::Valid,
            fired,
        }
    }

    pub fn score(&self, code: &str) -> f64 {
        self.scores.get(code).copied().unwrap_or(0.0)
    }

    /// Checks the output invariants against a registry.
    pub fn check(&self, registry: &[DiagnosticClass]) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if let Some((c, p)) = self.scores.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(format!("probability {p} for {c} outside [0, 1]"));
        }
        match self.status {
            ToolStatus::Invalid(_) if !self.predicted.is_empty() => Err("invalid output with predictions".into()),
            ToolStatus::Invalid(_) => Ok(()),
            ToolStatus::Valid => {
                if let Some(c) = registry.iter().find(|c| !self.scores.contains_key(&c.code)) {
                    return Err(format!("no score for {}", c.code));
                }
                let mut expect: Vec<&String> =
                    self.scores.iter().filter(|(_, &p)| p >= self.threshold).map(|(c, _)| c).collect();
                let mut got: Vec<&String> = self.predicted.iter().collect();
                expect.sort();
                got.sort();
                if expect != got {
                    return Err("predicted does not match thresholded scores".into());
                }
                Ok(())
            }
        }
    }
}

pub trait Classifier: Send + Sync {
    fn id(&self) -> &str;
    fn classify(&self, record: &EcgRecord, registry: &[DiagnosticClass]) -> ClassificationOutput;
}

/// Classifies `record` and wraps the result for the agent.
pub fn classification_tool_call(
    record: &EcgRecord,
    classifier: &dyn Classifier,
    registry: &[DiagnosticClass],
) -> ToolOutput {
    let out = classifier.classify(record, registry);
    match &out.status {
        ToolStatus::Valid => ToolOutput::valid(ToolBody::Classification(out)),
        ToolStatus::Invalid(reason) => ToolOutput::invalid(ToolKind::Classification, reason.clone()),
    }
}
