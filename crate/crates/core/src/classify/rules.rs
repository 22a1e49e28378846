//! Reference classifier over measurement features.
//!
//! Rhythm: AFIB (irregular RR with absent P) > STACH (HR > 100) >
//! SBRAD (HR < 60) > SR. Ectopy: a beat with RR before it under 80% of the
//! median RR is premature; narrow premature beats are PAC. A wide beat
//! (QRS >= 120 ms) that is premature or followed by a compensatory pause
//! (RR after it over 120% of the median) is PVC. STD fires on a median ST
//! level at or below -0.1 mV. 12-lead adds 1AVB, IVCD and LNGQT.

use std::collections::BTreeMap;

use super::{ClassificationOutput, Classifier, DiagnosticClass, DEFAULT_THRESHOLD};
use crate::measure::{filter::median, measure_record, MeasureError, MeasurementReport, QualityFlag};
use crate::signal::EcgRecord;

pub const SCORE_HIGH: f64 = 0.95;
pub const SCORE_LOW: f64 = 0.05;

const PREMATURE_RATIO: f64 = 0.8;
const PAUSE_RATIO: f64 = 1.2;
const WIDE_QRS_MS: f64 = 120.0;
const AFIB_CV: f64 = 0.15;
const ST_DEPRESSION_MV: f64 = -0.1;

#[derive(Debug, Clone)]
pub struct RuleClassifier {
    pub threshold: f64,
}

impl Default for RuleClassifier {
    fn default() -> Self {
        RuleClassifier {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl Classifier for RuleClassifier {
    fn id(&self) -> &str {
        "rule-reference"
    }

    fn classify(&self, record: &EcgRecord, registry: &[DiagnosticClass]) -> ClassificationOutput {
        if let Some(c) = registry.iter().find(|c| !c.leads_supported.contains(&record.lead_config())) {
            return ClassificationOutput::invalid(self.threshold, format!("class {} not supported for {}", c.code, record.lead_config()));
        }
        match measure_record(record) {
            Ok(report) => rule_scores(&report, registry, self.threshold),
            Err(MeasureError::SeriesTooShort { .. }) => {
                ClassificationOutput::invalid(self.threshold, QualityFlag::TooFewBeats.as_str())
            }
            Err(e) => ClassificationOutput::invalid(self.threshold, e.to_string()),
        }
    }
}

/// Applies the rules to a measurement report.
pub fn rule_scores(report: &MeasurementReport, registry: &[DiagnosticClass], threshold: f64) -> ClassificationOutput {
    let (Some(hr), Some(rr_mean), Some(rr_std)) = (report.heart_rate_bpm, report.rr_mean_ms, report.rr_std_ms) else {
        let reason = if report.beat_count == 0 {
            QualityFlag::NoisySignal
        } else {
            QualityFlag::TooFewBeats
        };
        return ClassificationOutput::invalid(threshold, reason.as_str());
    };

    let mut fired: BTreeMap<&str, &str> = BTreeMap::new();
    let p_absent = report.quality_flags.contains(&QualityFlag::MissingPWave);
    if rr_std / rr_mean > AFIB_CV && p_absent {
        fired.insert("AFIB", "irregular_rr_without_p");
    } else if hr > 100.0 {
        fired.insert("STACH", "hr_above_100");
    } else if hr < 60.0 {
        fired.insert("SBRAD", "hr_below_60");
    } else {
        fired.insert("SR", "regular_rate_60_100");
    }

    let median_rr = median(&mut report.per_beat.iter().filter_map(|b| b.rr_prev_ms).collect::<Vec<_>>());
    if let Some(m) = median_rr {
        for b in &report.per_beat {
            let premature = b.rr_prev_ms.is_some_and(|rr| rr < PREMATURE_RATIO * m);
            let pause = b.rr_next_ms.is_some_and(|rr| rr > PAUSE_RATIO * m);
            match b.qrs_ms {
                Some(q) if q >= WIDE_QRS_MS && (premature || pause) => {
                    fired.insert("PVC", "wide_premature_or_compensated");
                }
                Some(q) if q < WIDE_QRS_MS && premature => {
                    fired.insert("PAC", "narrow_premature");
                }
                _ => {}
            }
        }
    }
    if report.st_level_mv.is_some_and(|st| st <= ST_DEPRESSION_MV) {
        fired.insert("STD", "st_level_at_most_minus_0_1_mv");
    }
    if report.pr_interval_ms.is_some_and(|pr| pr > 200.0) {
        fired.insert("1AVB", "pr_above_200_ms");
    }
    if report.qrs_duration_ms.is_some_and(|q| q >= WIDE_QRS_MS) {
        fired.insert("IVCD", "median_qrs_at_least_120_ms");
    }
    if report.qtc_interval_ms.is_some_and(|q| q > 460.0) {
        fired.insert("LNGQT", "qtc_above_460_ms");
    }

    let scores = registry
        .iter()
        .map(|c| {
            let s = if fired.contains_key(c.code.as_str()) { SCORE_HIGH } else { SCORE_LOW };
            (c.code.clone(), s)
        })
        .collect();
    let fired = fired
        .into_iter()
        .filter(|(c, _)| registry.iter().any(|r| r.code == *c))
        .map(|(c, r)| (c.to_string(), r.to_string()))
        .collect();
    ClassificationOutput::from_scores(scores, registry, threshold, fired)
}
