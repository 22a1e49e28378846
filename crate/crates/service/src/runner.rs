//! Agent, judge and mode choices shared by the CLI and evaluation jobs.

use std::path::PathBuf;
use std::time::Duration;

use ecg_agent::dialogue::Dialogue;
use ecg_agent::eval::{
    evaluate, load_dataset, AgentFactory, ChatAgent, EvalError, EvalModes, EvalOptions, EvalReport, GtReplayAgent, Judge,
    LlmJudge, RuleJudge, RulePolicyAgent,
};
use serde::{Deserialize, Serialize};

use crate::config::{Config, ConfigError, JudgeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AgentChoice {
    #[serde(alias = "gt-replay")]
    #[value(name = "gt-replay", alias = "gt_replay")]
    GtReplay,
    #[default]
    #[serde(alias = "rule-policy")]
    #[value(name = "rule-policy", alias = "rule_policy")]
    RulePolicy,
    /// The configured chat backend.
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[value(name = "with_gt", alias = "with-gt")]
    WithGt,
    #[value(name = "without_gt", alias = "without-gt")]
    WithoutGt,
    #[default]
    Both,
}

impl From<ModeChoice> for EvalModes {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::WithGt => EvalModes::WithGt,
            ModeChoice::WithoutGt => EvalModes::WithoutGt,
            ModeChoice::Both => EvalModes::Both,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Input(String),
}

pub fn make_agent(choice: AgentChoice, config: &Config) -> Result<Box<dyn AgentFactory + Send>, ConfigError> {
    Ok(match choice {
        AgentChoice::GtReplay => Box::new(GtReplayAgent),
        AgentChoice::RulePolicy => Box::new(RulePolicyAgent),
        AgentChoice::Chat => Box::new(ChatAgent(config.chat_backend()?)),
    })
}

pub fn make_judge(kind: JudgeKind, config: &Config) -> Result<Box<dyn Judge>, ConfigError> {
    Ok(match kind {
        JudgeKind::Rule => Box::new(RuleJudge::with_tolerance(config.tolerance)),
        JudgeKind::Llm => {
            Box::new(LlmJudge::new(config.chat_judge()?, Duration::from_millis(config.judge.min_interval_ms)))
        }
    })
}

/// What to evaluate and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    /// A corpus directory or JSONL file readable by the service.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Inline dialogues instead of a dataset path.
    #[serde(default)]
    pub dialogues: Option<Vec<Dialogue>>,
    #[serde(default)]
    pub agent: AgentChoice,
    /// Defaults to the configured judge.
    #[serde(default)]
    pub judge: Option<JudgeKind>,
    #[serde(default)]
    pub mode: ModeChoice,
    #[serde(default)]
    pub seed: u64,
}

impl EvalRequest {
    pub fn dialogues(&self) -> Result<Vec<Dialogue>, RunError> {
        match (&self.dataset, &self.dialogues) {
            (Some(p), None) => Ok(load_dataset(p)?),
            (None, Some(d)) => Ok(d.clone()),
            _ => Err(RunError::Input("give exactly one of dataset, dialogues".into())),
        }
    }
}

pub fn run_eval(request: &EvalRequest, config: &Config) -> Result<EvalReport, RunError> {
    let dialogues = request.dialogues()?;
    let agent = make_agent(request.agent, config)?;
    let judge = make_judge(request.judge.unwrap_or(config.judge.kind), config)?;
    let options = EvalOptions { modes: request.mode.into(), seed: request.seed, session: config.session_config() };
    Ok(evaluate(&dialogues, agent.as_ref(), judge.as_ref(), &options)?)
}
