//! Builds a small templated dialogue corpus and writes it to disk.

use ecg_agent::mtd::{build_corpus, write_corpus, CorpusConfig, CorpusSize, TemplatedGenerator, ToolCache};
use ecg_agent::signal::LeadConfig;

fn main() {
    let config = CorpusConfig { lead_config: LeadConfig::LeadI, seed: 17, size: CorpusSize::Sample(30) };
    let corpus = build_corpus(&config, &TemplatedGenerator, &ToolCache::new()).expect("corpus builds");
    let s = &corpus.stats;
    println!("{} generated, {} kept, mean {:.1} turns", s.generated, s.kept, s.mean_turns);
    println!("per topic {:?}", s.per_topic);
    if let Some(sp) = &s.splits {
        println!("splits {}/{}/{}", sp.train, sp.val, sp.test);
    }

    let d = &corpus.dialogues[0];
    let scenario = d.scenario.as_ref().expect("generated dialogues carry a scenario");
    println!("first dialogue: {} / {} / {}", scenario.topic.as_str(), scenario.cefr.as_str(), scenario.action_sequence_id);
    for t in &d.turns {
        println!("  {:20} {}", t.action().as_str(), t.content().unwrap_or("<tool output>"));
    }

    let dir = std::env::temp_dir().join("ecg-agent-corpus-example");
    write_corpus(&corpus, &dir).expect("written");
    println!("wrote {}", dir.display());
}
