//! Synthetic multi-turn dialogue corpora.

pub mod corpus;
pub mod generate;
pub mod records;
pub mod templates;
pub mod vocab;

pub use corpus::{
    build_corpus, explode_turns, filter_dialogue, sample_scenario, scenario_combinations, split_dataset, write_corpus,
    Corpus, CorpusConfig, CorpusError, CorpusSize, CorpusStats, DropReason, Rejection, ScenarioSampler, SplitSizes,
    Splits, TrainingInstance, MIN_SPLIT_INPUT,
};
pub use generate::{
    plan_dialogue, DialogueGenerator, DialoguePlan, GenerateError, GenerationRequest, LlmGenerator, PlannedTurn,
    TemplatedGenerator, ToolCache,
};
pub use records::{resolve_record_ref, RecordKind, RecordRefError, SynthSpec};
pub use vocab::{find_terms, tier_terms};
