use ecg_agent::classify::{class_registry, RuleClassifier};
use ecg_agent::explain::{explain, tiou, ExplainConfig, Interval};
use ecg_agent::signal::{synthesize_with, BeatKind, LeadConfig, PrematureBeat, SynthParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn output_satisfies_interval_invariants(
        hr in 50.0f64..110.0,
        noise in 0.0f64..0.08,
        seed in any::<u64>(),
        premature in prop::option::of((1usize..6, prop::bool::ANY)),
        st in prop::sample::select(vec![0.0, -0.25]),
        lead in prop::sample::select(vec![LeadConfig::LeadI, LeadConfig::LeadII]),
        code in prop::sample::select(vec!["PVC", "PAC", "STD", "SR", "STACH", "SBRAD"]),
    ) {
        let premature = premature
            .map(|(i, v)| PrematureBeat { beat_index: i, kind: if v { BeatKind::Ventricular } else { BeatKind::Atrial }, coupling: 0.65 })
            .into_iter()
            .collect();
        let p = SynthParams { premature, st_offset_mv: st, lead_config: lead, ..SynthParams::new(hr, 6.0, 250.0, noise, seed) };
        let (rec, _) = synthesize_with(&p).unwrap();
        let reg = class_registry(lead);
        let out = explain(&rec, code, &RuleClassifier::default(), &reg, &ExplainConfig::default()).unwrap();
        out.check(rec.duration_s()).map_err(TestCaseError::fail)?;
        for w in out.intervals.windows(2) {
            prop_assert!(w[0].end_s <= w[1].start_s);
        }
        for iv in &out.intervals {
            prop_assert!(0.0 <= iv.start_s && iv.start_s < iv.end_s && iv.end_s <= rec.duration_s());
        }
    }

    #[test]
    fn tiou_under_a_common_shift(
        a in prop::collection::vec((0u32..5000, 1u32..800), 1..4),
        b in prop::collection::vec((0u32..5000, 1u32..800), 0..4),
        shift in 0u32..3000,
    ) {
        let set = |v: &[(u32, u32)], k: u32| -> Vec<Interval> {
            v.iter().map(|&(s, l)| Interval::new((s + k) as f64 / 1000.0, (s + l + k) as f64 / 1000.0)).collect()
        };
        let base = tiou(&set(&a, 0), &set(&b, 0)).unwrap();
        let moved = tiou(&set(&a, shift), &set(&b, shift)).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9);
        prop_assert!((tiou(&set(&a, shift), &set(&a, shift)).unwrap() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn premature_atrial_beat_is_localized() {
    let p = SynthParams {
        premature: vec![PrematureBeat { beat_index: 4, kind: BeatKind::Atrial, coupling: 0.6 }],
        ..SynthParams::new(70.0, 10.0, 250.0, 0.0, 2)
    };
    let (rec, gt) = synthesize_with(&p).unwrap();
    let out = explain(&rec, "PAC", &RuleClassifier::default(), &class_registry(LeadConfig::LeadII), &ExplainConfig::default()).unwrap();
    let truth: Vec<Interval> = gt.spans_of(BeatKind::Atrial).into_iter().map(Interval::from).collect();
    let top = out.top_interval().expect("an interval").interval();
    assert!(tiou(&[top], &truth).unwrap() >= 0.5, "{top:?} vs {truth:?}");
}
