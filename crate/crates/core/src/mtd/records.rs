//! Record references used in corpora: `synth:<kind>:hr=<bpm>:seed=<n>:lead=<cfg>`
//! for generated records, `file:<path>` for records on disk.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::explain::Interval;
use crate::signal::{
    load_record, synthesize_with, BeatKind, EcgRecord, Lead, LeadConfig, LoadOptions, PrematureBeat, RecordFormat,
    SignalError, SynthParams,
};

pub const SYNTH_DURATION_S: f64 = 10.0;
pub const SYNTH_RATE_HZ: f64 = 250.0;
pub const SYNTH_NOISE_MV: f64 = 0.02;
/// Deep enough to stay below the STD threshold on lead I as well.
pub const ST_DEPRESSION_MV: f64 = -0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKind {
    Normal,
    Pvc,
    Pac,
    StDepression,
    Afib,
    /// Lead-off recording: every sample zero.
    Flat,
}

impl RecordKind {
    pub const ALL: [RecordKind; 6] = [
        RecordKind::Normal,
        RecordKind::Pvc,
        RecordKind::Pac,
        RecordKind::StDepression,
        RecordKind::Afib,
        RecordKind::Flat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Normal => "normal",
            RecordKind::Pvc => "pvc",
            RecordKind::Pac => "pac",
            RecordKind::StDepression => "std",
            RecordKind::Afib => "afib",
            RecordKind::Flat => "flat",
        }
    }

    /// The class this record is built to show, if any.
    pub fn class_code(self) -> Option<&'static str> {
        match self {
            RecordKind::Pvc => Some("PVC"),
            RecordKind::Pac => Some("PAC"),
            RecordKind::StDepression => Some("STD"),
            RecordKind::Afib => Some("AFIB"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Hash, Eq)]
pub struct SynthSpec {
    pub kind: RecordKind,
    pub heart_rate_bpm: u32,
    pub seed: u64,
    pub lead_config: LeadConfig,
}

impl SynthSpec {
    pub fn params(&self) -> SynthParams {
        let mut p = SynthParams {
            lead_config: self.lead_config,
            ..SynthParams::new(
                self.heart_rate_bpm as f64,
                SYNTH_DURATION_S,
                SYNTH_RATE_HZ,
                SYNTH_NOISE_MV,
                self.seed,
            )
        };
        match self.kind {
            RecordKind::Normal | RecordKind::Flat => {}
            RecordKind::Pvc => {
                p.premature = vec![PrematureBeat { beat_index: 4, kind: BeatKind::Ventricular, coupling: 0.65 }];
            }
            RecordKind::Pac => {
                p.premature = vec![PrematureBeat { beat_index: 4, kind: BeatKind::Atrial, coupling: 0.7 }];
            }
            RecordKind::StDepression => p.st_offset_mv = ST_DEPRESSION_MV,
            RecordKind::Afib => {
                p.p_wave = false;
                p.rr_jitter = 0.25;
            }
        }
        p
    }

    pub fn build(&self) -> Result<EcgRecord, SignalError> {
        let id = self.to_string();
        if self.kind == RecordKind::Flat {
            let n = (SYNTH_DURATION_S * SYNTH_RATE_HZ) as usize;
            let leads = self
                .lead_config
                .lead_names()
                .iter()
                .map(|name| Lead { name: name.to_string(), samples: vec![0.0; n] })
                .collect();
            return EcgRecord::new(id, SYNTH_RATE_HZ, leads);
        }
        let (rec, _) = synthesize_with(&self.params())?;
        Ok(rec.with_record_id(id))
    }

    /// Where the record shows `class_code`: the premature beats for PVC and
    /// PAC, every beat for ST depression. `None` when the record was not
    /// built to show that class.
    pub fn truth_intervals(&self, class_code: &str) -> Option<Vec<Interval>> {
        if self.kind.class_code() != Some(class_code) {
            return None;
        }
        let (_, truth) = synthesize_with(&self.params()).ok()?;
        let spans = match self.kind {
            RecordKind::Pvc => truth.spans_of(BeatKind::Ventricular),
            RecordKind::Pac => truth.spans_of(BeatKind::Atrial),
            RecordKind::StDepression => (0..truth.beats.len()).map(|i| truth.beat_span_s(i)).collect(),
            _ => return None,
        };
        let out: Vec<Interval> = spans.into_iter().map(|(a, b)| Interval::new(a, b)).collect();
        (!out.is_empty()).then_some(out)
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "synth:{}:hr={}:seed={}:lead={}",
            self.kind.as_str(),
            self.heart_rate_bpm,
            self.seed,
            self.lead_config
        )
    }
}

impl FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed synthetic record reference `{s}`");
        let mut parts = s.strip_prefix("synth:").ok_or_else(bad)?.split(':');
        let kind_s = parts.next().ok_or_else(bad)?;
        let kind = RecordKind::ALL.into_iter().find(|k| k.as_str() == kind_s).ok_or_else(bad)?;
        let mut field = |key: &str| {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|p| p.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(bad)
        };
        let heart_rate_bpm = field("hr")?.parse().map_err(|_| bad())?;
        let seed = field("seed")?.parse().map_err(|_| bad())?;
        let lead_config = field("lead")?.parse().map_err(|_| bad())?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(SynthSpec { kind, heart_rate_bpm, seed, lead_config })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordRefError {
    #[error("{0}")]
    Malformed(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Loads or regenerates the record a corpus refers to.
pub fn resolve_record_ref(reference: &str, options: &LoadOptions) -> Result<EcgRecord, RecordRefError> {
    if reference.starts_with("synth:") {
        let spec: SynthSpec = reference.parse().map_err(RecordRefError::Malformed)?;
        return Ok(spec.build()?);
    }
    let path = reference
        .strip_prefix("file:")
        .ok_or_else(|| RecordRefError::Malformed(format!("unknown record reference `{reference}`")))?;
    let path = Path::new(path);
    let format = RecordFormat::from_path(path)
        .ok_or_else(|| RecordRefError::Malformed(format!("cannot tell the format of `{}`", path.display())))?;
    Ok(load_record(path, format, options)?)
}
