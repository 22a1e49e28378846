//! Corpus assembly: scenario sampling, filtering, splits, training
//! instances and the on-disk layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{plan_dialogue, DialogueGenerator, GenerationRequest, ToolCache};
use crate::dialogue::{
    action_sequence, sequences_for, serialize_dialogue, Cefr, Dialogue, DialogueTurn, GrammarMode, Scenario, Speaker,
    Topic,
};
use crate::signal::LeadConfig;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("no scenario is available for {0}")]
    EmptyScenarioSpace(LeadConfig),
    #[error("a split needs at least {min} dialogues, got {got}")]
    TooFewDialogues { min: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Every (topic, CEFR, sequence) combination usable with `lead_config`, in
/// topic, level, sequence order.
pub fn scenario_combinations(lead_config: LeadConfig) -> Vec<Scenario> {
    let seqs = sequences_for(lead_config);
    let mut out = Vec::with_capacity(Topic::ALL.len() * Cefr::ALL.len() * seqs.len());
    for topic in Topic::ALL {
        for cefr in Cefr::ALL {
            for s in &seqs {
                out.push(Scenario { topic, cefr, action_sequence_id: s.id().to_string() });
            }
        }
    }
    out
}

/// Uniform draws over the scenario space.
pub struct ScenarioSampler {
    space: Vec<Scenario>,
    rng: ChaCha8Rng,
}

impl ScenarioSampler {
    pub fn new(lead_config: LeadConfig, seed: u64) -> Result<Self, CorpusError> {
        let space = scenario_combinations(lead_config);
        if space.is_empty() {
            return Err(CorpusError::EmptyScenarioSpace(lead_config));
        }
        Ok(ScenarioSampler { space, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn space(&self) -> &[Scenario] {
        &self.space
    }

    pub fn sample(&mut self) -> Scenario {
        let i = self.rng.random_range(0..self.space.len());
        self.space[i].clone()
    }
}

pub fn sample_scenario(lead_config: LeadConfig, seed: u64) -> Result<Scenario, CorpusError> {
    Ok(ScenarioSampler::new(lead_config, seed)?.sample())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Generation,
    Schema,
    ActionMismatch,
    Grammar,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Generation => "generation",
            DropReason::Schema => "schema",
            DropReason::ActionMismatch => "action-mismatch",
            DropReason::Grammar => "grammar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub dialogue_id: String,
    pub reason: DropReason,
    pub detail: String,
}

/// Keeps a dialogue only if it carries a known scenario, every turn is well
/// formed, its actions equal the scenario's sequence and it replays under
/// the strict grammar.
pub fn filter_dialogue(d: &Dialogue) -> Result<(), Rejection> {
    let reject = |reason, detail: String| Rejection { dialogue_id: d.dialogue_id.clone(), reason, detail };
    let Some(scenario) = &d.scenario else {
        return Err(reject(DropReason::Schema, "missing scenario".into()));
    };
    let Some(seq) = action_sequence(&scenario.action_sequence_id) else {
        return Err(reject(DropReason::Schema, format!("unknown sequence `{}`", scenario.action_sequence_id)));
    };
    for (i, t) in d.turns.iter().enumerate() {
        t.check_shape().map_err(|m| reject(DropReason::Schema, format!("turns[{i}]: {m}")))?;
    }
    if d.actions() != seq.actions() {
        return Err(reject(DropReason::ActionMismatch, format!("actions differ from {}", seq.id())));
    }
    d.replay(GrammarMode::Strict).map_err(|v| reject(DropReason::Grammar, v.to_string()))?;
    Ok(())
}

pub const MIN_SPLIT_INPUT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Deterministic shuffle, then 10% each (floored) to val and test.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Result<Splits<T>, CorpusError> {
    if items.len() < MIN_SPLIT_INPUT {
        return Err(CorpusError::TooFewDialogues { min: MIN_SPLIT_INPUT, got: items.len() });
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = items.len() / 10;
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Splits { val: pick(&idx[..k]), test: pick(&idx[k..2 * k]), train: pick(&idx[2 * k..]) })
}

/// One supervised example: everything before an agent turn and that turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingInstance {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub history: Vec<DialogueTurn>,
    pub user_utterance: String,
    pub target: DialogueTurn,
}

pub fn explode_turns(d: &Dialogue) -> Vec<TrainingInstance> {
    let mut out = Vec::new();
    let mut utterance = String::new();
    for (k, t) in d.turns.iter().enumerate() {
        match t.speaker() {
            Speaker::User => utterance = t.content().unwrap_or_default().to_string(),
            Speaker::Agent => out.push(TrainingInstance {
                dialogue_id: d.dialogue_id.clone(),
                turn_index: k,
                history: d.turns[..k].to_vec(),
                user_utterance: utterance.clone(),
                target: t.clone(),
            }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub lead_config: LeadConfig,
    pub seed: u64,
    pub generator: String,
    pub generated: usize,
    pub kept: usize,
    pub dropped: BTreeMap<String, usize>,
    pub per_topic: BTreeMap<String, usize>,
    pub per_cefr: BTreeMap<String, usize>,
    pub per_sequence: BTreeMap<String, usize>,
    pub mean_turns: f64,
    pub mean_agent_turns: f64,
    pub training_instances: usize,
    pub splits: Option<SplitSizes>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusSize {
    /// Every scenario once.
    Sweep,
    /// Uniform draws.
    Sample(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusConfig {
    pub lead_config: LeadConfig,
    pub seed: u64,
    pub size: CorpusSize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub rejections: Vec<Rejection>,
    pub splits: Option<Splits<Dialogue>>,
    pub stats: CorpusStats,
}

fn item_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng.random()
}

/// Generates, filters and splits a corpus. Output depends only on the
/// config and the generator, never on thread scheduling.
pub fn build_corpus(
    config: &CorpusConfig,
    generator: &dyn DialogueGenerator,
    cache: &ToolCache,
) -> Result<Corpus, CorpusError> {
    let lead = config.lead_config;
    let scenarios = match config.size {
        CorpusSize::Sweep => {
            let s = scenario_combinations(lead);
            if s.is_empty() {
                return Err(CorpusError::EmptyScenarioSpace(lead));
            }
            s
        }
        CorpusSize::Sample(n) => {
            let mut sampler = ScenarioSampler::new(lead, config.seed)?;
            (0..n).map(|_| sampler.sample()).collect()
        }
    };
    let results: Vec<Result<Dialogue, Rejection>> = scenarios
        .into_par_iter()
        .enumerate()
        .map(|(i, scenario)| {
            let req = GenerationRequest {
                dialogue_id: format!("mtd-{lead}-{i:05}"),
                scenario,
                lead_config: lead,
                seed: item_seed(config.seed, i),
            };
            let generated = plan_dialogue(&req, cache).and_then(|plan| generator.realize(&plan, cache));
            let d = generated.map_err(|e| Rejection {
                dialogue_id: req.dialogue_id.clone(),
                reason: DropReason::Generation,
                detail: e.to_string(),
            })?;
            filter_dialogue(&d)?;
            Ok(d)
        })
        .collect();

    let generated = results.len();
    let (mut dialogues, mut rejections) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(d) => dialogues.push(d),
            Err(rej) => rejections.push(rej),
        }
    }
    let splits = split_dataset(&dialogues, config.seed).ok();
    let stats = corpus_stats(config, generator.id(), generated, &dialogues, &rejections, splits.as_ref());
    Ok(Corpus { dialogues, rejections, splits, stats })
}

fn corpus_stats(
    config: &CorpusConfig,
    generator: &str,
    generated: usize,
    dialogues: &[Dialogue],
    rejections: &[Rejection],
    splits: Option<&Splits<Dialogue>>,
) -> CorpusStats {
    let mut dropped = BTreeMap::new();
    for r in rejections {
        *dropped.entry(r.reason.as_str().to_string()).or_insert(0) += 1;
    }
    let (mut per_topic, mut per_cefr, mut per_sequence) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for d in dialogues {
        if let Some(s) = &d.scenario {
            *per_topic.entry(s.topic.to_string()).or_insert(0) += 1;
            *per_cefr.entry(s.cefr.as_str().to_string()).or_insert(0) += 1;
            *per_sequence.entry(s.action_sequence_id.clone()).or_insert(0) += 1;
        }
    }
    let n = dialogues.len().max(1) as f64;
    let turns: usize = dialogues.iter().map(|d| d.turns.len()).sum();
    let agent: usize = dialogues.iter().map(Dialogue::agent_turn_count).sum();
    CorpusStats {
        lead_config: config.lead_config,
        seed: config.seed,
        generator: generator.to_string(),
        generated,
        kept: dialogues.len(),
        dropped,
        per_topic,
        per_cefr,
        per_sequence,
        mean_turns: turns as f64 / n,
        mean_agent_turns: agent as f64 / n,
        training_instances: agent,
        splits: splits.map(|s| SplitSizes { train: s.train.len(), val: s.val.len(), test: s.test.len() }),
    }
}

fn write_jsonl(path: &Path, dialogues: &[Dialogue]) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    for d in dialogues {
        f.write_all(&serialize_dialogue(d))?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

/// Writes `dialogues.jsonl`, `splits/{train,val,test}.jsonl`,
/// `rejections.jsonl` and `stats.json` under `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("dialogues.jsonl"), &corpus.dialogues)?;
    if let Some(s) = &corpus.splits {
        let sd = dir.join("splits");
        fs::create_dir_all(&sd)?;
        write_jsonl(&sd.join("train.jsonl"), &s.train)?;
        write_jsonl(&sd.join("val.jsonl"), &s.val)?;
        write_jsonl(&sd.join("test.jsonl"), &s.test)?;
    }
    let mut rej = String::new();
    for r in &corpus.rejections {
        rej.push_str(&serde_json::to_string(r).expect("rejection serializes"));
        rej.push('\n');
    }
    fs::write(dir.join("rejections.jsonl"), rej)?;
    let stats = serde_json::to_string_pretty(&corpus.stats).expect("stats serialize");
    fs::write(dir.join("stats.json"), stats + "\n")?;
    Ok(())
}
