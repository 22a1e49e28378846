//! Rule-based classification of a few rhythms, with the rule that fired.

use ecg_agent::classify::{class_registry, Classifier, RuleClassifier};
use ecg_agent::signal::{synthesize_with, BeatKind, PrematureBeat, SynthParams};

fn main() {
    let cases = [
        ("sinus 70", SynthParams::new(70.0, 10.0, 250.0, 0.02, 1)),
        ("tachycardia 115", SynthParams::new(115.0, 10.0, 250.0, 0.02, 2)),
        ("bradycardia 48", SynthParams::new(48.0, 10.0, 250.0, 0.02, 3)),
        (
            "premature ventricular beat",
            SynthParams {
                premature: vec![PrematureBeat { beat_index: 5, kind: BeatKind::Ventricular, coupling: 0.65 }],
                ..SynthParams::new(70.0, 10.0, 250.0, 0.02, 4)
            },
        ),
        ("ST depression", SynthParams { st_offset_mv: -0.25, ..SynthParams::new(75.0, 10.0, 250.0, 0.02, 5) }),
    ];
    let classifier = RuleClassifier::default();
    for (name, params) in cases {
        let (record, _) = synthesize_with(&params).expect("valid parameters");
        let out = classifier.classify(&record, &class_registry(record.lead_config()));
        let fired: Vec<String> = out.fired.iter().map(|(c, r)| format!("{c} ({r})")).collect();
        println!("{name:28} -> {}", fired.join(", "));
    }
}
