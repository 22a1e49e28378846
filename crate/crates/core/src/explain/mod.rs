//! Explanation tool: sliding-window occlusion over a single lead.
//!
//! Each 400 ms window (100 ms stride) is replaced by a straight line between
//! its neighbours and the record is re-classified. A window's saliency is
//! the relative drop of the target class score. The top-k windows are merged
//! into intervals, and by default each interval is snapped to the
//! delineated extent of the beats under its saliency core. An optional pass
//! band-stops octave bands inside the top interval to name the frequency
//! band the decision depends on most.

mod spectral;
mod tiou;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{Classifier, DiagnosticClass};
use crate::measure::{delineate, detect_r_peaks, filter::ms_to_samples};
use crate::signal::{EcgRecord, LeadConfig};
use crate::tool::{ToolBody, ToolKind, ToolOutput, ToolStatus};

pub use spectral::{band_stop, octave_bands};
pub use tiou::{normalize, tiou, tiou_pairs, Interval, IntervalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub saliency: f64,
}

impl ExplainedInterval {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationOutput {
    #[serde(rename = "class")]
    pub class_code: String,
    pub intervals: Vec<ExplainedInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_band_hz: Option<(f64, f64)>,
    pub status: ToolStatus,
}

impl ExplanationOutput {
    fn invalid(class_code: &str, reason: impl Into<String>) -> Self {
        ExplanationOutput {
            class_code: class_code.to_string(),
            intervals: Vec::new(),
            frequency_band_hz: None,
            status: ToolStatus::Invalid(reason.into()),
        }
    }

    /// The highest-saliency interval (latest on ties).
    ///
    /// Occluding either beat of a short RR interval removes the same
    /// prematurity; the beat that ends it is the premature one.
    pub fn top_interval(&self) -> Option<&ExplainedInterval> {
        self.intervals
            .iter()
            .reduce(|best, iv| if iv.saliency >= best.saliency { iv } else { best })
    }

    pub fn check(&self, duration_s: f64) -> Result<(), String> {
        for w in self.intervals.windows(2) {
            if w[1].start_s < w[0].end_s {
                return Err("intervals overlap or are unsorted".into());
            }
        }
        for iv in &self.intervals {
            if !(iv.start_s < iv.end_s && iv.start_s >= 0.0 && iv.end_s <= duration_s + 1e-9) {
                return Err(format!("interval ({}, {}) out of range", iv.start_s, iv.end_s));
            }
            if !(0.0..=1.0).contains(&iv.saliency) {
                return Err(format!("saliency {} outside [0, 1]", iv.saliency));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("UnsupportedLeadConfig: explanations need a single-lead record, got {0}")]
    UnsupportedLeadConfig(LeadConfig),
    #[error("class `{0}` is not in the registry")]
    UnknownClass(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub window_ms: f64,
    pub stride_ms: f64,
    pub top_k: usize,
    pub spectral: bool,
    pub snap_to_beats: bool,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            window_ms: 400.0,
            stride_ms: 100.0,
            top_k: 3,
            spectral: true,
            snap_to_beats: true,
        }
    }
}

fn windows(n: usize, width: usize, stride: usize) -> Vec<(usize, usize)> {
    if n <= width {
        return vec![(0, n)];
    }
    let mut out: Vec<(usize, usize)> = (0..)
        .map(|k| k * stride)
        .take_while(|&s| s + width <= n)
        .map(|s| (s, s + width))
        .collect();
    if out.last().is_some_and(|&(_, e)| e < n) {
        out.push((n - width, n));
    }
    out
}

/// Replaces `[a, b)` with the straight line joining its neighbouring samples.
fn occlude(x: &[f64], a: usize, b: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    let left = if a > 0 { x[a - 1] } else { x.get(b).copied().unwrap_or(0.0) };
    let right = x.get(b).copied().unwrap_or(left);
    let span = (b - a + 1) as f64;
    for (k, v) in y[a..b].iter_mut().enumerate() {
        let t = (k + 1) as f64 / span;
        *v = left + (right - left) * t;
    }
    y
}

fn with_samples(record: &EcgRecord, samples: Vec<f64>) -> EcgRecord {
    let mut samples = Some(samples);
    record
        .map_samples(|_, _| samples.take().expect("single lead"))
        .expect("same shape as the source record")
}

fn score_of(classifier: &dyn Classifier, record: &EcgRecord, registry: &[DiagnosticClass], code: &str) -> f64 {
    let out = classifier.classify(record, registry);
    if out.status.is_valid() {
        out.score(code)
    } else {
        0.0
    }
}

pub fn explain(
    record: &EcgRecord,
    class_code: &str,
    classifier: &dyn Classifier,
    registry: &[DiagnosticClass],
    config: &ExplainConfig,
) -> Result<ExplanationOutput, ExplainError> {
    if !record.lead_config().is_single_lead() {
        return Err(ExplainError::UnsupportedLeadConfig(record.lead_config()));
    }
    if !registry.iter().any(|c| c.code == class_code) {
        return Err(ExplainError::UnknownClass(class_code.to_string()));
    }
    let base_out = classifier.classify(record, registry);
    if let ToolStatus::Invalid(reason) = &base_out.status {
        return Ok(ExplanationOutput::invalid(class_code, reason.clone()));
    }
    let base = base_out.score(class_code);
    if base < base_out.threshold || base <= 0.0 {
        return Ok(ExplanationOutput::invalid(class_code, "class_not_active"));
    }

    let fs = record.sampling_rate_hz();
    let x = &record.leads()[0].samples;
    let n = x.len();
    let occlusion_drops = |width: usize, stride: usize| {
        let wins = windows(n, width, stride);
        let drops: Vec<f64> = wins
            .par_iter()
            .map(|&(a, b)| {
                let masked = with_samples(record, occlude(x, a, b));
                ((base - score_of(classifier, &masked, registry, class_code)) / base).clamp(0.0, 1.0)
            })
            .collect();
        (wins, drops)
    };
    let mut width = ms_to_samples(config.window_ms, fs).max(1);
    let stride = ms_to_samples(config.stride_ms, fs).max(1);
    let (mut wins, mut drops) = occlusion_drops(width, stride);
    // Evidence spread over many beats survives a single window; widen
    // until occlusion moves the score.
    while drops.iter().all(|&d| d == 0.0) && width < n {
        width = (2 * width).min(n);
        (wins, drops) = occlusion_drops(width, stride.max(width / 4));
    }

    // Per-sample map: mean drop of the windows covering each sample.
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (&(a, b), &d) in wins.iter().zip(&drops) {
        for i in a..b {
            sum[i] += d;
            count[i] += 1;
        }
    }
    let map: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let map_max = map.iter().cloned().fold(0.0, f64::max);
    let core = |a: usize, b: usize| (a..b).filter(|&i| map[i] >= map_max - 1e-12).count();

    let mut order: Vec<usize> = (0..wins.len()).filter(|&i| drops[i] > 0.0).collect();
    order.sort_by(|&i, &j| {
        drops[j]
            .total_cmp(&drops[i])
            .then(core(wins[j].0, wins[j].1).cmp(&core(wins[i].0, wins[i].1)))
            .then(wins[j].0.cmp(&wins[i].0))
    });
    // Non-overlapping windows at least half as salient as the best one.
    let floor = order.first().map_or(0.0, |&i| 0.5 * drops[i]);
    let mut chosen: Vec<(usize, usize, f64)> = Vec::new();
    for i in order {
        let (a, b) = wins[i];
        if chosen.len() == config.top_k || drops[i] < floor {
            break;
        }
        if chosen.iter().all(|&(ca, cb, _)| b <= ca || a >= cb) {
            chosen.push((a, b, drops[i]));
        }
    }
    chosen.sort_by_key(|c| c.0);

    let mut merged: Vec<(usize, usize, f64)> = Vec::new();
    for (a, b, d) in chosen {
        match merged.last_mut() {
            Some(last) if a <= last.1 => {
                last.1 = last.1.max(b);
                last.2 = last.2.max(d);
            }
            _ => merged.push((a, b, d)),
        }
    }

    if config.snap_to_beats && map_max > 0.0 {
        let fid = detect_r_peaks(x, fs).map(|r| delineate(x, fs, &r)).unwrap_or_default();
        for iv in merged.iter_mut() {
            let beats: Vec<_> = fid
                .iter()
                .filter(|f| f.r_peak >= iv.0 && f.r_peak < iv.1 && map[f.r_peak] >= map_max - 1e-12)
                .collect();
            let start = beats.iter().filter_map(|f| f.present().first().copied()).min();
            let end = beats.iter().filter_map(|f| f.present().last().copied()).max();
            if let (Some(s), Some(e)) = (start, end) {
                if e > s {
                    *iv = (s, (e + 1).min(n), iv.2);
                }
            }
        }
        merged.sort_by_key(|m| m.0);
        let mut remerged: Vec<(usize, usize, f64)> = Vec::new();
        for m in merged {
            match remerged.last_mut() {
                Some(last) if m.0 <= last.1 => {
                    last.1 = last.1.max(m.1);
                    last.2 = last.2.max(m.2);
                }
                _ => remerged.push(m),
            }
        }
        merged = remerged;
    }

    let intervals: Vec<ExplainedInterval> = merged
        .iter()
        .map(|&(a, b, d)| ExplainedInterval {
            start_s: a as f64 / fs,
            end_s: b as f64 / fs,
            saliency: d,
        })
        .collect();

    let mut out = ExplanationOutput {
        class_code: class_code.to_string(),
        intervals,
        frequency_band_hz: None,
        status: ToolStatus::Valid,
    };
    if config.spectral {
        if let Some(top) = out.top_interval() {
            let a = (top.start_s * fs).round() as usize;
            let b = ((top.end_s * fs).round() as usize).min(n);
            let bands = octave_bands(fs);
            let band_drops: Vec<f64> = bands
                .par_iter()
                .map(|&band| {
                    let filtered = band_stop(x, fs, band);
                    let mut y = x.clone();
                    y[a..b].copy_from_slice(&filtered[a..b]);
                    let s = score_of(classifier, &with_samples(record, y), registry, class_code);
                    ((base - s) / base).clamp(0.0, 1.0)
                })
                .collect();
            let best = (0..bands.len()).reduce(|i, j| if band_drops[j] > band_drops[i] { j } else { i });
            out.frequency_band_hz = best.filter(|&i| band_drops[i] > 0.0).map(|i| bands[i]);
        }
    }
    Ok(out)
}

/// The agent-facing tool. 12-lead records are refused.
pub fn explanation_tool_call(
    record: &EcgRecord,
    class_code: &str,
    classifier: &dyn Classifier,
    registry: &[DiagnosticClass],
    config: &ExplainConfig,
) -> ToolOutput {
    match explain(record, class_code, classifier, registry, config) {
        Err(ExplainError::UnsupportedLeadConfig(_)) => ToolOutput::invalid(ToolKind::Explanation, "UnsupportedLeadConfig"),
        Err(e @ ExplainError::UnknownClass(_)) => ToolOutput::invalid(ToolKind::Explanation, e.to_string()),
        Ok(out) => match out.status.clone() {
            ToolStatus::Valid => ToolOutput::valid(ToolBody::Explanation(out)),
            ToolStatus::Invalid(r) => ToolOutput::invalid(ToolKind::Explanation, r),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{class_registry, RuleClassifier};
    use crate::signal::{synthesize_with, BeatKind, PrematureBeat, SynthParams};

    fn pvc_record(seed: u64) -> (EcgRecord, Interval) {
        let params = SynthParams {
            premature: vec![PrematureBeat { beat_index: 5, kind: BeatKind::Ventricular, coupling: 0.65 }],
            ..SynthParams::new(70.0, 10.0, 250.0, 0.02, seed)
        };
        let (rec, gt) = synthesize_with(&params).unwrap();
        let (a, b) = gt.spans_of(BeatKind::Ventricular)[0];
        (rec, Interval::new(a, b))
    }

    #[test]
    fn localizes_injected_pvc() {
        let (rec, truth) = pvc_record(1);
        let reg = class_registry(rec.lead_config());
        let out = explain(&rec, "PVC", &RuleClassifier::default(), &reg, &ExplainConfig::default()).unwrap();
        out.check(rec.duration_s()).unwrap();
        let top = out.top_interval().unwrap().interval();
        assert!(tiou(&[top], &[truth]).unwrap() >= 0.5, "{top:?} vs {truth:?}");
    }

    #[test]
    fn twelve_lead_is_refused() {
        let p = SynthParams { lead_config: LeadConfig::TwelveLead, ..SynthParams::new(70.0, 4.0, 250.0, 0.0, 0) };
        let (rec, _) = synthesize_with(&p).unwrap();
        let reg = class_registry(LeadConfig::TwelveLead);
        assert!(matches!(
            explain(&rec, "SR", &RuleClassifier::default(), &reg, &ExplainConfig::default()),
            Err(ExplainError::UnsupportedLeadConfig(LeadConfig::TwelveLead))
        ));
        let out = explanation_tool_call(&rec, "SR", &RuleClassifier::default(), &reg, &ExplainConfig::default());
        assert_eq!(out.status(), &ToolStatus::Invalid("UnsupportedLeadConfig".into()));
    }

    #[test]
    fn inactive_class_is_invalid() {
        let (rec, _) = synthesize_with(&SynthParams::new(70.0, 6.0, 250.0, 0.0, 0)).unwrap();
        let reg = class_registry(rec.lead_config());
        let out = explain(&rec, "PVC", &RuleClassifier::default(), &reg, &ExplainConfig::default()).unwrap();
        assert_eq!(out.status, ToolStatus::Invalid("class_not_active".into()));
    }

    #[test]
    fn deterministic_across_runs() {
        let (rec, _) = pvc_record(3);
        let reg = class_registry(rec.lead_config());
        let run = || explain(&rec, "PVC", &RuleClassifier::default(), &reg, &ExplainConfig::default()).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn window_grid_covers_record() {
        assert_eq!(windows(10, 4, 3), vec![(0, 4), (3, 7), (6, 10)]);
        assert_eq!(windows(11, 4, 3), vec![(0, 4), (3, 7), (6, 10), (7, 11)]);
        assert_eq!(windows(3, 4, 1), vec![(0, 3)]);
    }

    #[test]
    fn occlusion_is_a_straight_line() {
        let y = occlude(&[0.0, 9.0, 9.0, 9.0, 4.0], 1, 4);
        assert_eq!(y, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
