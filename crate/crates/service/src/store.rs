//! Append-only session log: `sessions/<id>.jsonl`, a header line and then
//! one line per turn in the dialogue wire format. Lines are never rewritten.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use ecg_agent::dialogue::{Dialogue, DialogueTurn, Scenario};
use ecg_agent::signal::LeadConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("session `{0}` already exists")]
    Exists(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub session_id: String,
    pub lead_config: LeadConfig,
    pub ecg_record_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnEntry {
    pub at: String,
    pub turn: DialogueTurn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub header: SessionHeader,
    pub turns: Vec<TurnEntry>,
}

impl StoredSession {
    pub fn dialogue(&self) -> Dialogue {
        Dialogue {
            dialogue_id: self.header.session_id.clone(),
            scenario: self.header.scenario.clone(),
            lead_config: self.header.lead_config,
            ecg_record_ref: self.header.ecg_record_ref.clone(),
            turns: self.turns.iter().map(|t| t.turn.clone()).collect(),
        }
    }

    pub fn updated_at(&self) -> &str {
        self.turns.last().map_or(&self.header.created_at, |t| &t.at)
    }
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

fn line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("store entries serialize") + "\n"
}

impl SessionStore {
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        let dir = data_dir.join("sessions");
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        Ok(SessionStore { dir })
    }

    pub fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn create(&self, header: &SessionHeader) -> Result<(), StoreError> {
        let path = self.path(&header.session_id);
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Exists(header.session_id.clone()))
            }
            Err(e) => return Err(io(&path)(e)),
        };
        f.write_all(line(header).as_bytes()).map_err(io(&path))?;
        f.sync_data().map_err(io(&path))
    }

    /// One write for all entries of a turn.
    pub fn append(&self, session_id: &str, entries: &[TurnEntry]) -> Result<(), StoreError> {
        if entries.is_empty() {
            return Ok(());
        }
        let path = self.path(session_id);
        let buf: String = entries.iter().map(line).collect();
        let mut f = OpenOptions::new().append(true).open(&path).map_err(io(&path))?;
        f.write_all(buf.as_bytes()).map_err(io(&path))?;
        f.sync_data().map_err(io(&path))
    }

    pub fn load(&self, session_id: &str) -> Result<StoredSession, StoreError> {
        let path = self.path(session_id);
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let corrupt = |line: usize, message: String| StoreError::Corrupt { path: path.display().to_string(), line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| corrupt(1, "empty session file".into()))?;
        let header: SessionHeader = serde_json::from_str(first).map_err(|e| corrupt(1, e.to_string()))?;
        let turns = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| corrupt(i + 1, e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(StoredSession { header, turns })
    }

    /// Every stored session, oldest first.
    pub fn load_all(&self) -> Result<Vec<StoredSession>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io(&self.dir))? {
            let p = entry.map_err(io(&self.dir))?.path();
            if p.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        let mut all = ids.iter().map(|id| self.load(id)).collect::<Result<Vec<_>, _>>()?;
        all.sort_by(|a, b| (&a.header.created_at, &a.header.session_id).cmp(&(&b.header.created_at, &b.header.session_id)));
        Ok(all)
    }
}
