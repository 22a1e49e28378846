//! Turning a request's record fields into a loaded record and a reference
//! that reloads it after a restart.

use std::path::{Path, PathBuf};

use ecg_agent::mtd::resolve_record_ref;
use ecg_agent::signal::{
    load_record, select_leads, sidecar_path, write_record, EcgRecord, LeadConfig, LoadOptions, RecordFormat,
};
use serde_json::json;

use crate::error::ApiError;

/// Where a record comes from. Exactly one source must be set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordInput {
    pub lead_config: Option<LeadConfig>,
    /// A `synth:` reference.
    pub record_ref: Option<String>,
    /// File stem under the configured records directory.
    pub record_id: Option<String>,
    /// CSV upload; needs `sampling_rate_hz`.
    pub csv: Option<String>,
    pub sampling_rate_hz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ResolvedRecord {
    pub record: EcgRecord,
    pub record_ref: String,
}

fn invalid(message: impl std::fmt::Display) -> ApiError {
    ApiError::bad_request("invalid_record", message.to_string())
}

fn safe_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

fn find_by_id(dir: &Path, id: &str) -> Option<(PathBuf, RecordFormat)> {
    [("csv", RecordFormat::Csv), ("hea", RecordFormat::WfdbSubset)]
        .into_iter()
        .map(|(ext, f)| (dir.join(format!("{id}.{ext}")), f))
        .find(|(p, _)| p.is_file())
}

/// Writes `record` as CSV plus sidecar and returns its `file:` reference.
pub fn materialize(record: &EcgRecord, dir: &Path, name: &str) -> Result<String, ApiError> {
    std::fs::create_dir_all(dir).map_err(|e| ApiError::internal(format!("creating {}: {e}", dir.display())))?;
    let path = dir.join(format!("{name}.csv"));
    write_record(record, &path, RecordFormat::Csv).map_err(|e| ApiError::internal(e.to_string()))?;
    let meta = json!({ "sampling_rate_hz": record.sampling_rate_hz(), "record_id": record.record_id() });
    std::fs::write(sidecar_path(&path), meta.to_string()).map_err(|e| ApiError::internal(e.to_string()))?;
    let abs = std::fs::canonicalize(&path).unwrap_or(path);
    Ok(format!("file:{}", abs.display()))
}

/// Loads the record. Anything that is not a bare `synth:` reference is
/// written under `scratch_dir/<name>.csv` and reloaded from there, so the
/// live record and the one rebuilt after a restart are the same bytes.
pub fn resolve(
    input: &RecordInput,
    records_dir: Option<&Path>,
    scratch_dir: &Path,
    name: &str,
) -> Result<ResolvedRecord, ApiError> {
    let sources = [input.record_ref.is_some(), input.record_id.is_some(), input.csv.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(ApiError::bad_request("invalid_request", "give exactly one of record_ref, record_id, csv"));
    }
    let opts = LoadOptions { sampling_rate_hz: input.sampling_rate_hz, record_id: None };
    let (record, synth_ref) = if let Some(r) = &input.record_ref {
        if !r.starts_with("synth:") {
            return Err(invalid(format!("record_ref must be a synth: reference, got `{r}`")));
        }
        (resolve_record_ref(r, &opts).map_err(invalid)?, Some(r.clone()))
    } else if let Some(id) = &input.record_id {
        let dir = records_dir.ok_or_else(|| invalid("no records directory is configured"))?;
        if !safe_id(id) {
            return Err(invalid(format!("bad record_id `{id}`")));
        }
        let (path, format) = find_by_id(dir, id).ok_or_else(|| ApiError::not_found("record", id))?;
        (load_record(&path, format, &opts).map_err(invalid)?, None)
    } else {
        let text = input.csv.as_deref().unwrap_or_default();
        let fs = input.sampling_rate_hz.ok_or_else(|| invalid("a csv upload needs sampling_rate_hz"))?;
        std::fs::create_dir_all(scratch_dir).map_err(|e| ApiError::internal(e.to_string()))?;
        let upload = scratch_dir.join(format!("{name}.upload.csv"));
        std::fs::write(&upload, text).map_err(|e| ApiError::internal(e.to_string()))?;
        let loaded = load_record(&upload, RecordFormat::Csv, &LoadOptions { sampling_rate_hz: Some(fs), record_id: Some(name.into()) });
        let _ = std::fs::remove_file(&upload);
        (loaded.map_err(invalid)?, None)
    };

    let (selected, projected) = match input.lead_config {
        Some(target) if target != record.lead_config() => (
            select_leads(&record, target)
                .map_err(|e| invalid(format!("cannot use a {} record as {target}: {e}", record.lead_config())))?,
            true,
        ),
        _ => (record, false),
    };
    if let (Some(r), false) = (synth_ref, projected) {
        return Ok(ResolvedRecord { record: selected, record_ref: r });
    }
    let record_ref = materialize(&selected, scratch_dir, name)?;
    let record = resolve_record_ref(&record_ref, &LoadOptions::default()).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(ResolvedRecord { record, record_ref })
}
