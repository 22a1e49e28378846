//! Reported intervals against the synthesizer's own landmarks.

use ecg_agent::measure::measure_record;
use ecg_agent::signal::{synthesize_with, GroundTruthFiducials, SynthParams};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// (PR, QRS, QT) in ms, medians over beats with both landmarks.
fn oracle(gt: &GroundTruthFiducials) -> (f64, f64, f64) {
    let ms = |a: Option<usize>, b: Option<usize>| Some((b? as f64 - a? as f64) * 1000.0 / gt.sampling_rate_hz);
    let pr = gt.beats.iter().filter_map(|b| ms(b.p_onset, b.qrs_onset)).collect();
    let qrs = gt.beats.iter().filter_map(|b| ms(b.qrs_onset, b.qrs_offset)).collect();
    let qt = gt.beats.iter().filter_map(|b| ms(b.qrs_onset, b.t_offset)).collect();
    (median(pr), median(qrs), median(qt))
}

#[test]
fn pr_qrs_qt_within_twenty_ms_across_rates() {
    for hr in (40..=180).step_by(10) {
        let (rec, gt) = synthesize_with(&SynthParams::new(hr as f64, 20.0, 500.0, 0.0, 4)).unwrap();
        let r = measure_record(&rec).unwrap();
        r.check().unwrap();
        let (pr, qrs, qt) = oracle(&gt);
        for (name, got, want) in [
            ("PR", r.pr_interval_ms, pr),
            ("QRS", r.qrs_duration_ms, qrs),
            ("QT", r.qt_interval_ms, qt),
        ] {
            let got = got.unwrap_or_else(|| panic!("{hr} bpm: no {name}"));
            assert!((got - want).abs() <= 20.0, "{hr} bpm {name}: {got} vs {want}");
        }
    }
}

#[test]
fn missing_p_waves_null_pr_with_a_flag() {
    let p = SynthParams { p_wave: false, ..SynthParams::new(70.0, 10.0, 500.0, 0.0, 0) };
    let (rec, _) = synthesize_with(&p).unwrap();
    let r = measure_record(&rec).unwrap();
    assert!(r.pr_interval_ms.is_none());
    assert!(!r.quality_flags.is_empty());
    r.check().unwrap();
}

#[test]
fn st_offset_is_reported() {
    let p = SynthParams { st_offset_mv: -0.2, ..SynthParams::new(70.0, 10.0, 500.0, 0.0, 0) };
    let (rec, _) = synthesize_with(&p).unwrap();
    let st = measure_record(&rec).unwrap().st_level_mv.unwrap();
    assert!((st + 0.2).abs() <= 0.05, "{st}");
}
