//! Diagnostic class registries per lead configuration.
//!
//! The shipped defaults are artifact choices, not a clinical list: rhythm
//! classes plus the single-lead explainable set are available everywhere,
//! and the 12-lead registry adds interval-based classes.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::signal::LeadConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticClass {
    pub code: String,
    pub display_name: String,
    pub leads_supported: BTreeSet<LeadConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("registry format: {0}")]
    Format(String),
    #[error("duplicate class code `{0}`")]
    DuplicateCode(String),
    #[error("class `{0}` supports no lead configuration")]
    NoLeads(String),
}

const ALL_LEADS: &[(&str, &str)] = &[
    ("SR", "Sinus rhythm"),
    ("STACH", "Sinus tachycardia"),
    ("SBRAD", "Sinus bradycardia"),
    ("AFIB", "Atrial fibrillation (suspected)"),
    ("PAC", "Premature atrial contraction"),
    ("PVC", "Premature ventricular contraction"),
    ("STD", "ST-segment depression"),
];

const TWELVE_LEAD_ONLY: &[(&str, &str)] = &[
    ("1AVB", "First-degree AV block"),
    ("IVCD", "Intraventricular conduction delay"),
    ("LNGQT", "Long QT interval"),
];

/// Every default class with its supported configurations.
pub fn default_registry() -> Vec<DiagnosticClass> {
    let all: BTreeSet<LeadConfig> = LeadConfig::ALL.into_iter().collect();
    let twelve: BTreeSet<LeadConfig> = [LeadConfig::TwelveLead].into_iter().collect();
    ALL_LEADS
        .iter()
        .map(|(c, n)| (c, n, all.clone()))
        .chain(TWELVE_LEAD_ONLY.iter().map(|(c, n)| (c, n, twelve.clone())))
        .map(|(code, name, leads)| DiagnosticClass {
            code: code.to_string(),
            display_name: name.to_string(),
            leads_supported: leads,
        })
        .collect()
}

/// Classes of the default registry usable with `lead_config`.
pub fn class_registry(lead_config: LeadConfig) -> Vec<DiagnosticClass> {
    filter_registry(&default_registry(), lead_config)
}

pub fn filter_registry(classes: &[DiagnosticClass], lead_config: LeadConfig) -> Vec<DiagnosticClass> {
    classes
        .iter()
        .filter(|c| c.leads_supported.contains(&lead_config))
        .cloned()
        .collect()
}

pub fn validate_registry(classes: &[DiagnosticClass]) -> Result<(), RegistryError> {
    let mut seen = HashSet::new();
    for c in classes {
        if !seen.insert(c.code.as_str()) {
            return Err(RegistryError::DuplicateCode(c.code.clone()));
        }
        if c.leads_supported.is_empty() {
            return Err(RegistryError::NoLeads(c.code.clone()));
        }
    }
    Ok(())
}

pub fn parse_registry(json: &str) -> Result<Vec<DiagnosticClass>, RegistryError> {
    let classes: Vec<DiagnosticClass> =
        serde_json::from_str(json).map_err(|e| RegistryError::Format(e.to_string()))?;
    validate_registry(&classes)?;
    Ok(classes)
}

pub fn load_registry(path: &Path) -> Result<Vec<DiagnosticClass>, RegistryError> {
    let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_registry(&text)
}
