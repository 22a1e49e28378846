//! ECG record model, file ingestion and lead selection.
//!
//! Records are immutable once built: [`EcgRecord::new`] checks every
//! invariant (equal lead lengths, finite samples, recognised lead set) and
//! infers the [`LeadConfig`] from the lead names.

mod csv_io;
mod synth;
mod wfdb;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use csv_io::{read_csv, write_csv};
pub use synth::{
    synthesize_ecg, synthesize_with, BeatFiducials, BeatKind, GroundTruthFiducials, PrematureBeat,
    SynthParams, Wave,
};
pub use wfdb::{read_wfdb, write_wfdb, WfdbWriteOptions};

/// The twelve standard lead names in conventional order.
pub const STANDARD_LEADS: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, byte {byte}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        byte: u64,
        message: String,
    },
    #[error("lead {lead} has {found} samples, expected {expected}")]
    LeadLengthMismatch {
        lead: String,
        expected: usize,
        found: usize,
    },
    #[error("lead {lead}: non-finite sample at index {index}")]
    NonFiniteSample { lead: String, index: usize },
    #[error("sampling rate must be positive and finite, got {0}")]
    InvalidSamplingRate(f64),
    #[error("lead set {0:?} is not a 12-lead, lead I or lead II configuration")]
    UnsupportedLeadSet(Vec<String>),
    #[error("lead {0} is not present in the record")]
    MissingLead(String),
    #[error("record has no samples")]
    Empty,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no sampling rate for {0}: pass one explicitly or provide a .meta.json sidecar")]
    MissingSamplingRate(PathBuf),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;

/// Which leads a record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadConfig {
    TwelveLead,
    #[serde(rename = "lead_i")]
    LeadI,
    #[serde(rename = "lead_ii")]
    LeadII,
}

impl LeadConfig {
    pub const ALL: [LeadConfig; 3] = [LeadConfig::TwelveLead, LeadConfig::LeadI, LeadConfig::LeadII];

    pub fn as_str(self) -> &'static str {
        match self {
            LeadConfig::TwelveLead => "twelve_lead",
            LeadConfig::LeadI => "lead_i",
            LeadConfig::LeadII => "lead_ii",
        }
    }

    pub fn is_single_lead(self) -> bool {
        !matches!(self, LeadConfig::TwelveLead)
    }

    /// Lead names a record with this configuration must carry.
    pub fn lead_names(self) -> &'static [&'static str] {
        match self {
            LeadConfig::TwelveLead => &STANDARD_LEADS,
            LeadConfig::LeadI => &STANDARD_LEADS[0..1],
            LeadConfig::LeadII => &STANDARD_LEADS[1..2],
        }
    }
}

impl fmt::Display for LeadConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LeadConfig {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "twelve_lead" | "12_lead" | "12lead" | "12" => Ok(LeadConfig::TwelveLead),
            "lead_i" | "leadi" | "i" | "lead1" => Ok(LeadConfig::LeadI),
            "lead_ii" | "leadii" | "ii" | "lead2" => Ok(LeadConfig::LeadII),
            other => Err(format!("unknown lead configuration `{other}`")),
        }
    }
}

/// On-disk formats understood by [`load_record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    Csv,
    WfdbSubset,
}

impl FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "wfdb" | "wfdb_subset" => Ok(RecordFormat::WfdbSubset),
            other => Err(format!("unknown record format `{other}`")),
        }
    }
}

impl RecordFormat {
    /// Guess the format from a file extension (`.hea`/`.dat` are WFDB).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(RecordFormat::Csv),
            "hea" | "dat" => Some(RecordFormat::WfdbSubset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lead {
    pub name: String,
    pub samples: Vec<f64>,
}

/// A multi-lead sampled waveform in millivolts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcgRecord {
    record_id: String,
    sampling_rate_hz: f64,
    lead_config: LeadConfig,
    leads: Vec<Lead>,
}

impl EcgRecord {
    pub fn new(record_id: impl Into<String>, sampling_rate_hz: f64, leads: Vec<Lead>) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(SignalError::InvalidSamplingRate(sampling_rate_hz));
        }
        let mut leads = leads;
        for lead in &mut leads {
            lead.name = canonical_lead_name(&lead.name);
        }
        let first = leads.first().ok_or(SignalError::Empty)?;
        let expected = first.samples.len();
        if expected == 0 {
            return Err(SignalError::Empty);
        }
        for lead in &leads {
            if lead.samples.len() != expected {
                return Err(SignalError::LeadLengthMismatch {
                    lead: lead.name.clone(),
                    expected,
                    found: lead.samples.len(),
                });
            }
            if let Some(index) = lead.samples.iter().position(|v| !v.is_finite()) {
                return Err(SignalError::NonFiniteSample {
                    lead: lead.name.clone(),
                    index,
                });
            }
        }
        let lead_config = infer_lead_config(&leads)?;
        Ok(EcgRecord {
            record_id: record_id.into(),
            sampling_rate_hz,
            lead_config,
            leads,
        })
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn lead_config(&self) -> LeadConfig {
        self.lead_config
    }

    pub fn leads(&self) -> &[Lead] {
        &self.leads
    }

    pub fn len(&self) -> usize {
        self.leads[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sampling_rate_hz
    }

    pub fn lead(&self, name: &str) -> Option<&Lead> {
        self.leads.iter().find(|l| l.name.eq_ignore_ascii_case(name))
    }

    /// The lead measurements are taken on: II, then I, then the first lead.
    pub fn measurement_lead(&self) -> &Lead {
        self.lead("II")
            .or_else(|| self.lead("I"))
            .unwrap_or(&self.leads[0])
    }

    pub fn with_record_id(mut self, id: impl Into<String>) -> Self {
        self.record_id = id.into();
        self
    }

    /// Returns a copy with every lead replaced by `f(name, samples)`.
    pub fn map_samples(&self, mut f: impl FnMut(&str, &[f64]) -> Vec<f64>) -> Result<Self> {
        let leads = self
            .leads
            .iter()
            .map(|l| Lead {
                name: l.name.clone(),
                samples: f(&l.name, &l.samples),
            })
            .collect();
        EcgRecord::new(self.record_id.clone(), self.sampling_rate_hz, leads)
    }
}

impl<'de> Deserialize<'de> for EcgRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            record_id: String,
            sampling_rate_hz: f64,
            leads: Vec<Lead>,
        }
        let raw = Raw::deserialize(d)?;
        EcgRecord::new(raw.record_id, raw.sampling_rate_hz, raw.leads).map_err(serde::de::Error::custom)
    }
}

fn canonical_lead_name(name: &str) -> String {
    let trimmed = name.trim();
    STANDARD_LEADS
        .iter()
        .find(|s| s.eq_ignore_ascii_case(trimmed))
        .map(|s| s.to_string())
        .unwrap_or_else(|| trimmed.to_string())
}

fn infer_lead_config(leads: &[Lead]) -> Result<LeadConfig> {
    let names: Vec<&str> = leads.iter().map(|l| l.name.as_str()).collect();
    match names.as_slice() {
        ["I"] => return Ok(LeadConfig::LeadI),
        ["II"] => return Ok(LeadConfig::LeadII),
        _ => {}
    }
    if names.len() == 12 && STANDARD_LEADS.iter().all(|s| names.contains(s)) {
        return Ok(LeadConfig::TwelveLead);
    }
    Err(SignalError::UnsupportedLeadSet(
        names.iter().map(|s| s.to_string()).collect(),
    ))
}

/// Options for [`load_record`]. CSV files carry no sampling rate, so it comes
/// from here or from a `<stem>.meta.json` sidecar next to the file.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub sampling_rate_hz: Option<f64>,
    pub record_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsvSidecar {
    sampling_rate_hz: f64,
    #[serde(default)]
    record_id: Option<String>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn load_record(path: &Path, format: RecordFormat, options: &LoadOptions) -> Result<EcgRecord> {
    match format {
        RecordFormat::Csv => {
            let mut id = options.record_id.clone();
            let fs = match options.sampling_rate_hz {
                Some(fs) => fs,
                None => {
                    let side = sidecar_path(path);
                    let text = std::fs::read_to_string(&side)
                        .map_err(|_| SignalError::MissingSamplingRate(path.to_path_buf()))?;
                    let meta: CsvSidecar =
                        serde_json::from_str(&text).map_err(|e| SignalError::Parse {
                            path: side.clone(),
                            line: e.line() as u64,
                            byte: 0,
                            message: e.to_string(),
                        })?;
                    if id.is_none() {
                        id = meta.record_id;
                    }
                    meta.sampling_rate_hz
                }
            };
            let id = id.unwrap_or_else(|| file_stem(path));
            read_csv(path, &id, fs)
        }
        RecordFormat::WfdbSubset => read_wfdb(path),
    }
}

pub fn write_record(record: &EcgRecord, path: &Path, format: RecordFormat) -> Result<()> {
    match format {
        RecordFormat::Csv => write_csv(record, path),
        RecordFormat::WfdbSubset => {
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            write_wfdb(record, dir, &file_stem(path), &WfdbWriteOptions::default()).map(|_| ())
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("record")
        .to_string()
}

/// Projects a record onto the leads of `target`. Samples are copied unchanged.
pub fn select_leads(record: &EcgRecord, target: LeadConfig) -> Result<EcgRecord> {
    if record.lead_config == target {
        return Ok(record.clone());
    }
    let mut leads = Vec::with_capacity(target.lead_names().len());
    for name in target.lead_names() {
        let lead = record
            .lead(name)
            .ok_or_else(|| SignalError::MissingLead(name.to_string()))?;
        leads.push(lead.clone());
    }
    EcgRecord::new(record.record_id.clone(), record.sampling_rate_hz, leads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twelve(n: usize) -> EcgRecord {
        let leads = STANDARD_LEADS
            .iter()
            .enumerate()
            .map(|(i, name)| Lead {
                name: name.to_string(),
                samples: (0..n).map(|k| (k as f64 * 0.001) + i as f64).collect(),
            })
            .collect();
        EcgRecord::new("r", 500.0, leads).unwrap()
    }

    #[test]
    fn infers_lead_configs() {
        assert_eq!(twelve(10).lead_config(), LeadConfig::TwelveLead);
        let one = EcgRecord::new("a", 100.0, vec![Lead { name: "ii".into(), samples: vec![0.0; 5] }]).unwrap();
        assert_eq!(one.lead_config(), LeadConfig::LeadII);
        assert_eq!(one.leads()[0].name, "II");
        let bad = EcgRecord::new("a", 100.0, vec![Lead { name: "MLII".into(), samples: vec![0.0; 5] }]);
        assert!(matches!(bad, Err(SignalError::UnsupportedLeadSet(_))));
    }

    #[test]
    fn rejects_mismatch_and_non_finite() {
        let leads = vec![
            Lead { name: "I".into(), samples: vec![0.0; 4] },
            Lead { name: "II".into(), samples: vec![0.0; 3] },
        ];
        assert!(matches!(
            EcgRecord::new("x", 1.0, leads),
            Err(SignalError::LeadLengthMismatch { .. })
        ));
        let leads = vec![Lead { name: "I".into(), samples: vec![0.0, f64::NAN] }];
        assert!(matches!(
            EcgRecord::new("x", 1.0, leads),
            Err(SignalError::NonFiniteSample { index: 1, .. })
        ));
        let leads = vec![Lead { name: "I".into(), samples: vec![0.0] }];
        assert!(matches!(
            EcgRecord::new("x", 0.0, leads),
            Err(SignalError::InvalidSamplingRate(_))
        ));
    }

    #[test]
    fn select_leads_projects_and_rejects_missing() {
        let rec = twelve(20);
        let two = select_leads(&rec, LeadConfig::LeadII).unwrap();
        assert_eq!(two.lead_config(), LeadConfig::LeadII);
        assert_eq!(two.leads()[0].samples, rec.lead("II").unwrap().samples);
        assert_eq!(select_leads(&rec, LeadConfig::TwelveLead).unwrap(), rec);
        let one = select_leads(&rec, LeadConfig::LeadI).unwrap();
        match select_leads(&one, LeadConfig::LeadII) {
            Err(SignalError::MissingLead(name)) => assert_eq!(name, "II"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn select_leads_never_alters_bytes() {
        let rec = twelve(64);
        for target in [LeadConfig::LeadI, LeadConfig::LeadII] {
            let out = select_leads(&rec, target).unwrap();
            let name = target.lead_names()[0];
            let a: Vec<u64> = out.leads()[0].samples.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = rec.lead(name).unwrap().samples.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lead_config_parsing() {
        assert_eq!("12-lead".parse::<LeadConfig>().unwrap(), LeadConfig::TwelveLead);
        assert_eq!("lead_ii".parse::<LeadConfig>().unwrap(), LeadConfig::LeadII);
        assert!("lead_iii".parse::<LeadConfig>().is_err());
        assert_eq!(serde_json::to_string(&LeadConfig::LeadI).unwrap(), "\"lead_i\"");
    }
}
