//! Scores the rule policy on a generated corpus and prints the report tables.

use ecg_agent::agent::SessionConfig;
use ecg_agent::eval::{evaluate, EvalModes, EvalOptions, RuleJudge, RulePolicyAgent};
use ecg_agent::mtd::{build_corpus, CorpusConfig, CorpusSize, TemplatedGenerator, ToolCache};
use ecg_agent::signal::LeadConfig;

fn main() {
    let mut dialogues = Vec::new();
    for (seed, lead) in [(1, LeadConfig::LeadI), (2, LeadConfig::LeadII), (3, LeadConfig::TwelveLead)] {
        let config = CorpusConfig { lead_config: lead, seed, size: CorpusSize::Sample(12) };
        dialogues.extend(build_corpus(&config, &TemplatedGenerator, &ToolCache::new()).expect("corpus").dialogues);
    }
    let options = EvalOptions { modes: EvalModes::Both, seed: 0, session: SessionConfig::default() };
    let report = evaluate(&dialogues, &RulePolicyAgent, &RuleJudge::default(), &options).expect("evaluates");
    print!("{}", report.to_markdown());
}
