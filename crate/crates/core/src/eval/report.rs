//! Evaluation report: per-lead metrics shaped like the published tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use super::claims::Tolerance;
use super::nap::ResponseCategory;
use crate::signal::LeadConfig;

pub const REPORT_SCHEMA_VERSION: &str = "ecg-agent-eval/1";
/// Classes whose explanation TIoU is reported.
pub const TIOU_CLASSES: [&str; 3] = ["PVC", "PAC", "STD"];

/// A number rounded to two decimals, or an explicit null with a reason.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Value(f64),
    Missing { value: Option<f64>, reason: String },
}

impl Metric {
    pub fn value(x: f64) -> Self {
        Metric::Value((x * 100.0).round() / 100.0)
    }

    pub fn missing(reason: impl Into<String>) -> Self {
        Metric::Missing { value: None, reason: reason.into() }
    }

    pub fn from_mean(sum: f64, n: usize, reason: &str) -> Self {
        if n == 0 {
            Metric::missing(reason)
        } else {
            Metric::value(sum / n as f64)
        }
    }

    pub fn get(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Missing { .. } => None,
        }
    }

    fn render(&self) -> String {
        self.get().map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Missing { reason, .. } => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("value", &None::<f64>)?;
                m.serialize_entry("reason", reason)?;
                m.end()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponseMeans {
    pub post_classification: Metric,
    pub post_measurement: Metric,
    /// Pooled over post-classification and post-measurement turns.
    pub average: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectMeans {
    pub accuracy_mean: Metric,
    pub completeness_mean: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadCounts {
    pub dialogues: usize,
    pub agent_turns: usize,
    pub judged_responses: BTreeMap<ResponseCategory, usize>,
    pub faithfulness_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadReport {
    pub accuracy_mean: ToolResponseMeans,
    pub completeness_mean: ToolResponseMeans,
    pub direct: DirectMeans,
    pub nap_with_gt: Metric,
    pub nap_without_gt: Metric,
    pub faithfulness_pct: Metric,
    pub tiou_per_class: BTreeMap<String, Metric>,
    pub naturalness_mean: Metric,
    pub cefr_adherence_mean: Metric,
    pub counts: LeadCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model_id: String,
    pub judge_id: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub modes: Vec<String>,
    pub quality_source: String,
    pub tolerance: Tolerance,
    pub rubric: String,
    pub human_agreement: String,
    pub dialogues: usize,
}

/// Means of the per-lead values, for the cross-lead columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLead {
    pub accuracy_mean: Metric,
    pub completeness_mean: Metric,
    pub direct_accuracy_mean: Metric,
    pub direct_completeness_mean: Metric,
    pub nap_with_gt: Metric,
    pub nap_without_gt: Metric,
    pub faithfulness_pct: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub metadata: ReportMetadata,
    pub per_lead: BTreeMap<LeadConfig, LeadReport>,
    pub averaged_across_leads: CrossLead,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>, reason: &str) -> Metric {
    let v: Vec<f64> = values.flatten().collect();
    Metric::from_mean(v.iter().sum(), v.len(), reason)
}

impl EvalReport {
    pub fn cross_lead(per_lead: &BTreeMap<LeadConfig, LeadReport>) -> CrossLead {
        let pick = |f: fn(&LeadReport) -> &Metric| per_lead.values().map(move |l| f(l).get());
        let none = "no lead configuration has this metric";
        CrossLead {
            accuracy_mean: mean_of(pick(|l| &l.accuracy_mean.average), none),
            completeness_mean: mean_of(pick(|l| &l.completeness_mean.average), none),
            direct_accuracy_mean: mean_of(pick(|l| &l.direct.accuracy_mean), none),
            direct_completeness_mean: mean_of(pick(|l| &l.direct.completeness_mean), none),
            nap_with_gt: mean_of(pick(|l| &l.nap_with_gt), none),
            nap_without_gt: mean_of(pick(|l| &l.nap_without_gt), none),
            faithfulness_pct: mean_of(pick(|l| &l.faithfulness_pct), none),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Markdown tables: response quality, direct responses, TIoU, NAP and
    /// faithfulness, dialogue quality.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let leads: Vec<_> = self.per_lead.iter().collect();
        let _ = writeln!(s, "Model: {}  Judge: {}  Dataset: {}\n", self.metadata.model_id, self.metadata.judge_id, self.metadata.dataset_hash);
        let _ = writeln!(s, "| Leads | Accuracy | Completeness |\n|---|---|---|");
        for (lead, r) in &leads {
            let _ = writeln!(s, "| {lead} | {} | {} |", r.accuracy_mean.average.render(), r.completeness_mean.average.render());
        }
        let _ = writeln!(s, "\n| Direct responses | Accuracy | Completeness |\n|---|---|---|");
        let _ = writeln!(
            s,
            "| averaged | {} | {} |",
            self.averaged_across_leads.direct_accuracy_mean.render(),
            self.averaged_across_leads.direct_completeness_mean.render()
        );
        let _ = writeln!(s, "\n| Leads | {} |\n|---|---|---|---|", TIOU_CLASSES.join(" | "));
        for (lead, r) in &leads {
            let cells: Vec<String> = TIOU_CLASSES.iter().map(|c| r.tiou_per_class[*c].render()).collect();
            let _ = writeln!(s, "| {lead} | {} |", cells.join(" | "));
        }
        let _ = writeln!(s, "\n| Leads | NAP w/o GT | NAP w/ GT | Faithfulness |\n|---|---|---|---|");
        for (lead, r) in &leads {
            let _ = writeln!(s, "| {lead} | {} | {} | {} |", r.nap_without_gt.render(), r.nap_with_gt.render(), r.faithfulness_pct.render());
        }
        let _ = writeln!(s, "\n| Leads | Naturalness | CEFR adherence |\n|---|---|---|");
        for (lead, r) in &leads {
            let _ = writeln!(s, "| {lead} | {} | {} |", r.naturalness_mean.render(), r.cefr_adherence_mean.render());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_rendering() {
        assert_eq!(serde_json::to_string(&Metric::value(85.2851)).unwrap(), "85.29");
        assert_eq!(Metric::value(85.29).render(), "85.29");
        assert_eq!(
            serde_json::to_string(&Metric::missing("not run")).unwrap(),
            r#"{"value":null,"reason":"not run"}"#
        );
        let back: Metric = serde_json::from_str(r#"{"value":null,"reason":"x"}"#).unwrap();
        assert_eq!(back, Metric::missing("x"));
    }
}
