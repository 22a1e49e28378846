//! Evaluation harness: next-action prediction, faithfulness, judged
//! response quality, explanation TIoU and dialogue quality, aggregated per
//! lead configuration.

pub mod claims;
pub mod judge;
pub mod nap;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::agent::SessionConfig;
use crate::dialogue::{parse_dialogue, serialize_dialogue, Dialogue, DialogueError};
use crate::explain::tiou;
use crate::mtd::{SynthSpec, ToolCache};
use crate::signal::LeadConfig;

pub use claims::{extract_claims, tool_claims, within_tolerance, Claims, Quantity, Tolerance, Unit};
pub use judge::{rule_verdict, rule_verdict_within, GroundTruth, Judge, JudgeError, JudgeVerdict, LlmJudge, QualityVerdict, RuleJudge};
pub use nap::{
    response_category, run_with_gt, run_without_gt, AgentFactory, ChatAgent, GtReplayAgent, NapMode, NapRun,
    ResponseCategory, ResponseSample, RulePolicyAgent, TurnPrediction,
};
pub use report::{
    CrossLead, DirectMeans, EvalReport, LeadCounts, LeadReport, Metric, ReportMetadata, ToolResponseMeans,
    REPORT_SCHEMA_VERSION, TIOU_CLASSES,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no dialogues to evaluate")]
    Empty,
    #[error("nothing to score: {0}")]
    NoSamples(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("record: {0}")]
    Record(String),
    #[error("dataset {path}: {source}")]
    Dataset { path: String, source: DialogueError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalModes {
    WithGt,
    WithoutGt,
    #[default]
    Both,
}

impl EvalModes {
    fn has(self, m: NapMode) -> bool {
        matches!((self, m), (EvalModes::Both, _) | (EvalModes::WithGt, NapMode::WithGt) | (EvalModes::WithoutGt, NapMode::WithoutGt))
    }

    /// The run quality metrics are read from: self-generated history when
    /// available, since that is how the agent is used.
    fn quality_source(self) -> NapMode {
        if self.has(NapMode::WithoutGt) {
            NapMode::WithoutGt
        } else {
            NapMode::WithGt
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub modes: EvalModes,
    pub seed: u64,
    pub session: SessionConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { modes: EvalModes::Both, seed: 0, session: SessionConfig::default() }
    }
}

/// Reads a corpus: `splits/test.jsonl` when present, else `dialogues.jsonl`,
/// or the file itself when `path` is a file.
pub fn load_dataset(path: &Path) -> Result<Vec<Dialogue>, EvalError> {
    let file = if path.is_file() {
        path.to_path_buf()
    } else if path.join("splits/test.jsonl").is_file() {
        path.join("splits/test.jsonl")
    } else {
        path.join("dialogues.jsonl")
    };
    let text = fs::read_to_string(&file)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            parse_dialogue(l.as_bytes())
                .map_err(|e| EvalError::Dataset { path: format!("{}:{}", file.display(), i + 1), source: e })
        })
        .collect()
}

/// SHA-256 over the sorted per-dialogue digests, so order does not matter.
pub fn dataset_hash(dialogues: &[Dialogue]) -> String {
    let mut digests: Vec<String> = dialogues.iter().map(|d| hex::encode(Sha256::digest(serialize_dialogue(d)))).collect();
    digests.sort();
    let mut h = Sha256::new();
    for d in &digests {
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// NAP as a percentage over every agent turn.
pub fn nap(
    dialogues: &[Dialogue],
    agent: &dyn AgentFactory,
    mode: NapMode,
    config: &SessionConfig,
) -> Result<f64, EvalError> {
    if dialogues.is_empty() {
        return Err(EvalError::Empty);
    }
    let cache = ToolCache::new();
    let counts: Vec<(usize, usize)> = dialogues
        .par_iter()
        .map(|d| {
            let mut b = agent.backend(d);
            let run = match mode {
                NapMode::WithGt => run_with_gt(d, b.as_mut(), config),
                NapMode::WithoutGt => run_without_gt(d, b.as_mut(), config, &cache)?,
            };
            Ok((run.matched(), run.predictions.len()))
        })
        .collect::<Result<_, EvalError>>()?;
    let (m, n) = counts.iter().fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    if n == 0 {
        return Err(EvalError::NoSamples("no agent turns".into()));
    }
    Ok(100.0 * m as f64 / n as f64)
}

/// Every agent text turn directly after a tool turn, with that output.
fn tool_followed(d: &Dialogue) -> impl Iterator<Item = (&crate::tool::ToolOutput, &str)> {
    d.turns.windows(2).filter_map(|w| Some((w[0].tool_output()?, w[1].content()?)))
}

/// Share of tool-followed responses the judge finds faithful, in percent.
pub fn faithfulness(transcripts: &[Dialogue], judge: &dyn Judge) -> Result<f64, EvalError> {
    let mut n = 0;
    let mut ok = 0;
    for d in transcripts {
        for (out, text) in tool_followed(d) {
            n += 1;
            ok += judge.faithful(out, text)? as usize;
        }
    }
    if n == 0 {
        return Err(EvalError::NoSamples("no tool-followed responses".into()));
    }
    Ok(100.0 * ok as f64 / n as f64)
}

pub fn judge_response(response: &str, ground_truth: &GroundTruth, judge: &dyn Judge) -> Result<JudgeVerdict, EvalError> {
    Ok(judge.judge_response(response, ground_truth)?)
}

/// Mean naturalness and CEFR adherence.
pub fn dialogue_quality(transcripts: &[Dialogue], judge: &dyn Judge) -> Result<(f64, f64), EvalError> {
    if transcripts.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut nat = 0u64;
    let mut cefr = 0u64;
    for d in transcripts {
        let q = judge.dialogue_quality(d)?;
        nat += q.naturalness as u64;
        cefr += q.cefr_adherence as u64;
    }
    let n = transcripts.len() as f64;
    Ok((nat as f64 / n, cefr as f64 / n))
}

/// Everything one dialogue contributes to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueScores {
    pub lead_config: LeadConfig,
    pub nap_with_gt: Option<(usize, usize)>,
    pub nap_without_gt: Option<(usize, usize)>,
    pub agent_turns: usize,
    pub faithful: Vec<bool>,
    pub verdicts: Vec<(ResponseCategory, JudgeVerdict)>,
    pub tiou: Vec<(String, f64)>,
    pub quality: Option<QualityVerdict>,
}

fn explanation_tious(d: &Dialogue) -> Vec<(String, f64)> {
    let Ok(spec) = d.ecg_record_ref.parse::<SynthSpec>() else { return Vec::new() };
    d.turns
        .iter()
        .filter_map(|t| t.tool_output()?.explanation().filter(|e| e.status.is_valid()))
        .filter_map(|e| {
            let truth = spec.truth_intervals(&e.class_code)?;
            let pred: Vec<_> = e.intervals.iter().map(|i| i.interval()).collect();
            Some((e.class_code.clone(), tiou(&pred, &truth).ok()?))
        })
        .collect()
}

pub fn score_dialogue(
    d: &Dialogue,
    agent: &dyn AgentFactory,
    judge: &dyn Judge,
    options: &EvalOptions,
    cache: &ToolCache,
) -> Result<DialogueScores, EvalError> {
    let with = options
        .modes
        .has(NapMode::WithGt)
        .then(|| run_with_gt(d, agent.backend(d).as_mut(), &options.session));
    let without = if options.modes.has(NapMode::WithoutGt) {
        Some(run_without_gt(d, agent.backend(d).as_mut(), &options.session, cache)?)
    } else {
        None
    };
    let source = match options.modes.quality_source() {
        NapMode::WithGt => with.as_ref(),
        NapMode::WithoutGt => without.as_ref(),
    }
    .expect("quality source run exists");

    let mut faithful = Vec::new();
    let mut verdicts = Vec::new();
    for s in &source.samples {
        if let (Some(out), Some(text)) = (&s.preceding_tool, &s.response) {
            faithful.push(judge.faithful(out, text)?);
        }
        if let (Some(cat), Some(gt)) = (s.category, &s.ground_truth) {
            let v = match &s.response {
                Some(text) => judge.judge_response(text, &GroundTruth::from_text(gt.clone()))?,
                None => JudgeVerdict { accuracy: 1, completeness: 1, rationale: "no response at this turn".into() },
            };
            verdicts.push((cat, v));
        }
    }
    let quality = if source.transcript.scenario.is_some() {
        Some(judge.dialogue_quality(&source.transcript)?)
    } else {
        None
    };
    let counts = |r: &Option<NapRun>| r.as_ref().map(|r| (r.matched(), r.predictions.len()));
    Ok(DialogueScores {
        lead_config: d.lead_config,
        nap_with_gt: counts(&with),
        nap_without_gt: counts(&without),
        agent_turns: d.agent_turn_count(),
        faithful,
        verdicts,
        tiou: explanation_tious(&source.transcript),
        quality,
    })
}

/// Runs every metric on `dialogues`. Dialogues are scored in parallel and
/// aggregated in a fixed order, so the report does not depend on input order.
pub fn evaluate(
    dialogues: &[Dialogue],
    agent: &dyn AgentFactory,
    judge: &dyn Judge,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if dialogues.is_empty() {
        return Err(EvalError::Empty);
    }
    let cache = ToolCache::new();
    let scores: Vec<DialogueScores> = dialogues
        .par_iter()
        .map(|d| score_dialogue(d, agent, judge, options, &cache))
        .collect::<Result<_, _>>()?;
    let modes = [NapMode::WithGt, NapMode::WithoutGt]
        .into_iter()
        .filter(|m| options.modes.has(*m))
        .map(|m| serde_json::to_value(m).unwrap().as_str().unwrap().to_string())
        .collect();
    let quality_source = serde_json::to_value(options.modes.quality_source()).unwrap().as_str().unwrap().to_string();
    let metadata = ReportMetadata {
        model_id: agent.id(),
        judge_id: judge.id().to_string(),
        dataset_hash: dataset_hash(dialogues),
        seed: options.seed,
        modes,
        quality_source,
        tolerance: judge.tolerance(),
        rubric: "artifact-defined: 5 all claims match, 4 within tolerance with at most one omission, 3 partial, \
2 mostly wrong, 1 contradiction or no overlap"
            .into(),
        human_agreement: "not measured; judge identity recorded instead".into(),
        dialogues: dialogues.len(),
    };
    Ok(build_report(&scores, metadata))
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Aggregates per-dialogue scores. Sums are over integers or sorted floats.
pub fn build_report(scores: &[DialogueScores], metadata: ReportMetadata) -> EvalReport {
    let mut by_lead: BTreeMap<LeadConfig, Vec<&DialogueScores>> = BTreeMap::new();
    for s in scores {
        by_lead.entry(s.lead_config).or_default().push(s);
    }
    let per_lead = by_lead
        .into_iter()
        .map(|(lead, group)| (lead, lead_report(lead, &group)))
        .collect::<BTreeMap<_, _>>();
    let averaged_across_leads = EvalReport::cross_lead(&per_lead);
    EvalReport { schema_version: REPORT_SCHEMA_VERSION.into(), metadata, per_lead, averaged_across_leads }
}

fn lead_report(lead: LeadConfig, group: &[&DialogueScores]) -> LeadReport {
    let verdicts: Vec<&(ResponseCategory, JudgeVerdict)> = group.iter().flat_map(|s| &s.verdicts).collect();
    let sum_by = |cats: &[ResponseCategory], f: fn(&JudgeVerdict) -> u8| {
        let v: Vec<u64> = verdicts.iter().filter(|(c, _)| cats.contains(c)).map(|(_, j)| f(j) as u64).collect();
        (v.iter().sum::<u64>() as f64, v.len())
    };
    let means = |f: fn(&JudgeVerdict) -> u8| {
        let (c, nc) = sum_by(&[ResponseCategory::PostClassification], f);
        let (m, nm) = sum_by(&[ResponseCategory::PostMeasurement], f);
        ToolResponseMeans {
            post_classification: Metric::from_mean(c, nc, "no post-classification responses"),
            post_measurement: Metric::from_mean(m, nm, "no post-measurement responses"),
            average: Metric::from_mean(c + m, nc + nm, "no post-classification or post-measurement responses"),
        }
    };
    let direct = |f: fn(&JudgeVerdict) -> u8| {
        let (d, n) = sum_by(&[ResponseCategory::Direct], f);
        Metric::from_mean(d, n, "no direct responses")
    };
    let nap_metric = |f: fn(&DialogueScores) -> Option<(usize, usize)>| {
        let runs: Vec<(usize, usize)> = group.iter().filter_map(|s| f(s)).collect();
        if runs.is_empty() {
            return Metric::missing("mode not run");
        }
        let (m, n) = runs.iter().fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
        Metric::from_mean(100.0 * m as f64, n, "no agent turns")
    };
    let faithful: Vec<bool> = group.iter().flat_map(|s| s.faithful.iter().copied()).collect();
    let mut tiou_per_class = BTreeMap::new();
    for class in TIOU_CLASSES {
        let v: Vec<f64> = group.iter().flat_map(|s| &s.tiou).filter(|(c, _)| c == class).map(|(_, x)| *x).collect();
        let reason = if lead.is_single_lead() {
            "no explanation of this class with a known ground truth"
        } else {
            "explanation is not available for 12-lead records"
        };
        let n = v.len();
        tiou_per_class.insert(class.to_string(), Metric::from_mean(100.0 * sorted_sum(v), n, reason));
    }
    let quality: Vec<&QualityVerdict> = group.iter().filter_map(|s| s.quality.as_ref()).collect();
    let q_sum = |f: fn(&QualityVerdict) -> u8| quality.iter().map(|q| f(q) as u64).sum::<u64>() as f64;
    let mut judged_responses = BTreeMap::new();
    for (c, _) in &verdicts {
        *judged_responses.entry(*c).or_insert(0) += 1;
    }
    LeadReport {
        accuracy_mean: means(|v| v.accuracy),
        completeness_mean: means(|v| v.completeness),
        direct: DirectMeans { accuracy_mean: direct(|v| v.accuracy), completeness_mean: direct(|v| v.completeness) },
        nap_with_gt: nap_metric(|s| s.nap_with_gt),
        nap_without_gt: nap_metric(|s| s.nap_without_gt),
        faithfulness_pct: Metric::from_mean(
            100.0 * faithful.iter().filter(|f| **f).count() as f64,
            faithful.len(),
            "no tool-followed responses",
        ),
        tiou_per_class,
        naturalness_mean: Metric::from_mean(q_sum(|q| q.naturalness), quality.len(), "no transcript with a scenario"),
        cefr_adherence_mean: Metric::from_mean(q_sum(|q| q.cefr_adherence), quality.len(), "no transcript with a scenario"),
        counts: LeadCounts {
            dialogues: group.len(),
            agent_turns: group.iter().map(|s| s.agent_turns).sum(),
            judged_responses,
            faithfulness_pairs: faithful.len(),
        },
    }
}
