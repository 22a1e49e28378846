//! Measurement tool: R-peak detection, PQRST delineation and intervals.

mod delineate;
mod detect;
pub mod filter;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::signal::{BeatFiducials, EcgRecord};
use crate::tool::{ToolBody, ToolOutput};

pub use delineate::delineate;
pub use detect::detect_r_peaks;

/// Per-beat landmarks, same shape as the synthesiser's ground truth.
pub type Fiducials = Vec<BeatFiducials>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("series has {samples} samples; at least {required} (2 s) are needed")]
    SeriesTooShort { samples: usize, required: usize },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("invalid sampling rate {0}")]
    InvalidSamplingRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityFlag {
    TooFewBeats,
    NoisySignal,
    MissingPWave,
    MissingTWave,
}

impl QualityFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityFlag::TooFewBeats => "TooFewBeats",
            QualityFlag::NoisySignal => "NoisySignal",
            QualityFlag::MissingPWave => "MissingPWave",
            QualityFlag::MissingTWave => "MissingTWave",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatIntervals {
    pub r_peak: usize,
    pub rr_prev_ms: Option<f64>,
    pub rr_next_ms: Option<f64>,
    pub pr_ms: Option<f64>,
    pub qrs_ms: Option<f64>,
    pub qt_ms: Option<f64>,
    pub qtc_ms: Option<f64>,
    /// Mean level 40-80 ms after the J point relative to the PR baseline.
    pub st_level_mv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub heart_rate_bpm: Option<f64>,
    pub rr_mean_ms: Option<f64>,
    pub rr_std_ms: Option<f64>,
    pub pr_interval_ms: Option<f64>,
    pub qrs_duration_ms: Option<f64>,
    pub qt_interval_ms: Option<f64>,
    pub qtc_interval_ms: Option<f64>,
    pub st_level_mv: Option<f64>,
    pub beat_count: usize,
    pub per_beat: Vec<BeatIntervals>,
    pub quality_flags: BTreeSet<QualityFlag>,
    pub qtc_formula: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead: Option<String>,
}

impl MeasurementReport {
    /// Checks the report invariants; returns the first violation.
    pub fn check(&self) -> Result<(), String> {
        let intervals = [
            ("heart_rate_bpm", self.heart_rate_bpm),
            ("rr_mean_ms", self.rr_mean_ms),
            ("pr_interval_ms", self.pr_interval_ms),
            ("qrs_duration_ms", self.qrs_duration_ms),
            ("qt_interval_ms", self.qt_interval_ms),
            ("qtc_interval_ms", self.qtc_interval_ms),
        ];
        for (name, v) in intervals {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(format!("{name} must be positive"));
            }
        }
        if let (Some(qt), Some(qrs)) = (self.qt_interval_ms, self.qrs_duration_ms) {
            if qt < qrs {
                return Err("qt shorter than qrs".into());
            }
        }
        if self.heart_rate_bpm.is_some() && self.beat_count < 2 {
            return Err("heart rate needs two beats".into());
        }
        let any_null = intervals.iter().any(|(_, v)| v.is_none()) || self.rr_std_ms.is_none();
        if any_null && self.quality_flags.is_empty() {
            return Err("null field without a quality flag".into());
        }
        Ok(())
    }
}

fn ms(samples: usize, fs: f64) -> f64 {
    samples as f64 * 1000.0 / fs
}

fn median_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    filter::median(&mut values.collect::<Vec<_>>())
}

/// Aggregates per-beat intervals: HR from the mean RR, everything else as medians.
pub fn compute_measurements(fiducials: &[BeatFiducials], sampling_rate_hz: f64) -> MeasurementReport {
    let fs = sampling_rate_hz;
    let n = fiducials.len();
    let mut flags = BTreeSet::new();
    let per_beat: Vec<BeatIntervals> = fiducials
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let rr_prev_ms = i.checked_sub(1).map(|p| ms(f.r_peak - fiducials[p].r_peak, fs));
            let rr_next_ms = fiducials.get(i + 1).map(|q| ms(q.r_peak - f.r_peak, fs));
            let span = |a: Option<usize>, b: Option<usize>| match (a, b) {
                (Some(a), Some(b)) if b > a => Some(ms(b - a, fs)),
                _ => None,
            };
            let qt_ms = span(f.qrs_onset, f.t_offset);
            let qtc_ms = match (qt_ms, rr_prev_ms) {
                (Some(qt), Some(rr)) => Some(qt / (rr / 1000.0).sqrt()),
                _ => None,
            };
            BeatIntervals {
                r_peak: f.r_peak,
                rr_prev_ms,
                rr_next_ms,
                pr_ms: span(f.p_onset, f.qrs_onset),
                qrs_ms: span(f.qrs_onset, f.qrs_offset),
                qt_ms,
                qtc_ms,
                st_level_mv: None,
            }
        })
        .collect();

    let rr: Vec<f64> = per_beat.iter().filter_map(|b| b.rr_prev_ms).collect();
    let (rr_mean_ms, rr_std_ms) = if rr.is_empty() {
        flags.insert(QualityFlag::TooFewBeats);
        (None, None)
    } else {
        let mean = rr.iter().sum::<f64>() / rr.len() as f64;
        let var = rr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rr.len() as f64;
        (Some(mean), Some(var.sqrt()))
    };

    // An interval is reported only when at least half the beats carry it.
    let majority = |values: Vec<f64>| {
        if n > 0 && 2 * values.len() >= n {
            median_of(values.into_iter())
        } else {
            None
        }
    };
    let pr = majority(per_beat.iter().filter_map(|b| b.pr_ms).collect());
    if pr.is_none() && n > 0 {
        flags.insert(QualityFlag::MissingPWave);
    }
    let qrs = majority(per_beat.iter().filter_map(|b| b.qrs_ms).collect());
    let mut qt = majority(per_beat.iter().filter_map(|b| b.qt_ms).collect());
    if qt.is_none() && n > 0 {
        flags.insert(QualityFlag::MissingTWave);
    }
    let mut qtc = majority(per_beat.iter().filter_map(|b| b.qtc_ms).collect());
    if let (Some(q), Some(d)) = (qt, qrs) {
        if q < d {
            qt = None;
            qtc = None;
            flags.insert(QualityFlag::NoisySignal);
        }
    }
    if n == 0 {
        flags.insert(QualityFlag::TooFewBeats);
        flags.insert(QualityFlag::NoisySignal);
    }

    let mut report = MeasurementReport {
        heart_rate_bpm: rr_mean_ms.map(|m| 60_000.0 / m),
        rr_mean_ms,
        rr_std_ms,
        pr_interval_ms: pr,
        qrs_duration_ms: qrs,
        qt_interval_ms: qt,
        qtc_interval_ms: qtc,
        st_level_mv: None,
        beat_count: n,
        per_beat,
        quality_flags: flags,
        qtc_formula: "bazett".into(),
        lead: None,
    };
    if report.check().is_err() && report.quality_flags.is_empty() {
        report.quality_flags.insert(QualityFlag::NoisySignal);
    }
    report
}

/// Full pipeline on one lead, including the ST level used by the ST rule.
pub fn measure_samples(samples: &[f64], sampling_rate_hz: f64) -> Result<MeasurementReport, MeasureError> {
    let peaks = detect_r_peaks(samples, sampling_rate_hz)?;
    let fid = delineate(samples, sampling_rate_hz, &peaks);
    let mut report = compute_measurements(&fid, sampling_rate_hz);
    let fs = sampling_rate_hz;
    let at = |ms: f64| filter::ms_to_samples(ms, fs);
    for (beat, f) in report.per_beat.iter_mut().zip(&fid) {
        let (Some(on), Some(j)) = (f.qrs_onset, f.qrs_offset) else { continue };
        let lo = j + at(40.0);
        let hi = j + at(80.0);
        if hi >= samples.len() {
            continue;
        }
        let baseline = filter::median(&mut samples[on.saturating_sub(at(20.0))..=on].to_vec()).unwrap_or(0.0);
        let mean = samples[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        beat.st_level_mv = Some(mean - baseline);
    }
    report.st_level_mv = median_of(report.per_beat.iter().filter_map(|b| b.st_level_mv));
    Ok(report)
}

/// Measures a record on its measurement lead (II, else I, else the first).
pub fn measure_record(record: &EcgRecord) -> Result<MeasurementReport, MeasureError> {
    let lead = record.measurement_lead();
    let mut report = measure_samples(&lead.samples, record.sampling_rate_hz())?;
    report.lead = Some(lead.name.clone());
    Ok(report)
}

/// The agent-facing tool. A null heart rate makes the output invalid.
pub fn measurement_tool_call(record: &EcgRecord) -> ToolOutput {
    use crate::tool::ToolKind;
    match measure_record(record) {
        Err(MeasureError::SeriesTooShort { .. }) => {
            ToolOutput::invalid(ToolKind::Measurement, QualityFlag::TooFewBeats.as_str())
        }
        Err(e) => ToolOutput::invalid(ToolKind::Measurement, e.to_string()),
        Ok(report) if report.heart_rate_bpm.is_none() => {
            let reason = if report.beat_count == 0 && report.quality_flags.contains(&QualityFlag::NoisySignal) {
                QualityFlag::NoisySignal
            } else {
                QualityFlag::TooFewBeats
            };
            ToolOutput::invalid(ToolKind::Measurement, reason.as_str())
        }
        Ok(report) => ToolOutput::valid(ToolBody::Measurement(report)),
    }
}
