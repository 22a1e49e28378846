use std::collections::BTreeSet;

use ecg_agent::dialogue::{serialize_dialogue, GrammarMode};
use ecg_agent::mtd::{build_corpus, filter_dialogue, scenario_combinations, CorpusConfig, CorpusSize, TemplatedGenerator, ToolCache};
use ecg_agent::signal::LeadConfig;

fn sweep(lead: LeadConfig) {
    let cfg = CorpusConfig { lead_config: lead, seed: 3, size: CorpusSize::Sweep };
    let c = build_corpus(&cfg, &TemplatedGenerator, &ToolCache::new()).unwrap();
    let space = scenario_combinations(lead).len();
    assert_eq!(c.stats.generated, space);
    assert!(c.rejections.is_empty(), "{:?}", c.rejections.first());
    assert_eq!(c.dialogues.len(), space);
    for d in &c.dialogues {
        filter_dialogue(d).unwrap();
        d.replay(GrammarMode::Strict).unwrap();
        if lead == LeadConfig::TwelveLead {
            assert!(d.turns.iter().all(|t| t.action().as_str() != "call_explanation"));
        }
    }

    let s = c.splits.as_ref().unwrap();
    assert_eq!(s.train.len() + s.val.len() + s.test.len(), space);
    assert_eq!(s.val.len(), space / 10);
    assert_eq!(s.test.len(), space / 10);
    let key = |d: &ecg_agent::dialogue::Dialogue| serialize_dialogue(d);
    let all: BTreeSet<Vec<u8>> = c.dialogues.iter().map(key).collect();
    let mut seen = BTreeSet::new();
    for part in [&s.train, &s.val, &s.test] {
        for d in part.iter() {
            assert!(seen.insert(key(d)), "a dialogue is in two splits");
        }
    }
    assert_eq!(seen, all);
}

#[test]
fn lead_i_sweep_keeps_everything() {
    sweep(LeadConfig::LeadI);
}

#[test]
fn twelve_lead_sweep_keeps_everything() {
    sweep(LeadConfig::TwelveLead);
}

#[test]
fn different_seeds_give_different_corpora() {
    let build = |seed| {
        let cfg = CorpusConfig { lead_config: LeadConfig::LeadII, seed, size: CorpusSize::Sample(8) };
        build_corpus(&cfg, &TemplatedGenerator, &ToolCache::new()).unwrap().dialogues
    };
    assert_eq!(build(1), build(1));
    assert_ne!(build(1), build(2));
}
