//! Occlusion saliency for a PVC, compared with where the beat was injected.

use ecg_agent::classify::{class_registry, RuleClassifier};
use ecg_agent::explain::{explain, tiou, ExplainConfig, Interval};
use ecg_agent::signal::{synthesize_with, BeatKind, PrematureBeat, SynthParams};

fn main() {
    let params = SynthParams {
        premature: vec![PrematureBeat { beat_index: 6, kind: BeatKind::Ventricular, coupling: 0.65 }],
        ..SynthParams::new(70.0, 10.0, 250.0, 0.02, 11)
    };
    let (record, truth) = synthesize_with(&params).expect("valid parameters");
    let registry = class_registry(record.lead_config());
    let out = explain(&record, "PVC", &RuleClassifier::default(), &registry, &ExplainConfig::default()).expect("explainable");

    for iv in &out.intervals {
        println!("{:6.3} s - {:6.3} s  saliency {:.3}", iv.start_s, iv.end_s, iv.saliency);
    }
    if let Some((lo, hi)) = out.frequency_band_hz {
        println!("most relevant band {lo:.1}-{hi:.1} Hz");
    }
    let injected: Vec<Interval> = truth.spans_of(BeatKind::Ventricular).into_iter().map(Interval::from).collect();
    let top = out.top_interval().expect("at least one interval").interval();
    println!("injected {:?}, top-interval TIoU {:.2}", injected[0], tiou(&[top], &injected).expect("well-formed"));
}
