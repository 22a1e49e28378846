//! Heart rate and intervals of a synthetic record, checked against the
//! landmarks the synthesizer placed.

use ecg_agent::measure::measure_record;
use ecg_agent::signal::{synthesize_with, SynthParams};

fn main() {
    let (record, truth) = synthesize_with(&SynthParams::new(72.0, 10.0, 500.0, 0.02, 7)).expect("valid parameters");
    let report = measure_record(&record).expect("measurable");

    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.1}"));
    println!("lead {}, {} beats ({} synthesised)", report.lead.as_deref().unwrap_or("?"), report.beat_count, truth.beats.len());
    println!("HR {} bpm, RR {} ms", show(report.heart_rate_bpm), show(report.rr_mean_ms));
    println!("PR {} ms, QRS {} ms, QT {} ms, QTc {} ms", show(report.pr_interval_ms), show(report.qrs_duration_ms), show(report.qt_interval_ms), show(report.qtc_interval_ms));
    println!("ST {} mV, flags {:?}", show(report.st_level_mv), report.quality_flags);
}
