//! CSV layout: header row of lead names, then one row per time step.
//! A lead may end early only by leaving its trailing cells empty; that is
//! reported as a lead-length mismatch rather than silently padded.

use std::path::Path;

use super::{EcgRecord, Lead, Result, SignalError};

pub fn read_csv(path: &Path, record_id: &str, sampling_rate_hz: f64) -> Result<EcgRecord> {
    let file = std::fs::File::open(path).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: u64, byte: u64, message: String| SignalError::Parse {
        path: path.to_path_buf(),
        line,
        byte,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, 0, format!("malformed header: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().any(|h| h.is_empty()) {
        return Err(parse_err(1, 0, "malformed header: empty lead name".into()));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    let mut ended = vec![false; headers.len()];
    for row in reader.records() {
        let row = row.map_err(|e| {
            let (line, byte) = e
                .position()
                .map(|p| (p.line(), p.byte()))
                .unwrap_or((0, 0));
            parse_err(line, byte, e.to_string())
        })?;
        let (line, byte) = row
            .position()
            .map(|p| (p.line(), p.byte()))
            .unwrap_or((0, 0));
        if row.len() > headers.len() {
            return Err(parse_err(
                line,
                byte,
                format!("{} fields but only {} leads in header", row.len(), headers.len()),
            ));
        }
        for (col, column) in columns.iter_mut().enumerate() {
            let cell = row.get(col).unwrap_or("");
            if cell.is_empty() {
                ended[col] = true;
                continue;
            }
            if ended[col] {
                return Err(parse_err(
                    line,
                    byte,
                    format!("lead {} resumes after an empty cell", &headers[col]),
                ));
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, byte, format!("invalid sample `{cell}`")))?;
            if !value.is_finite() {
                return Err(parse_err(
                    line,
                    byte,
                    format!("non-finite sample in lead {}", &headers[col]),
                ));
            }
            column.push(value);
        }
    }

    let expected = columns.iter().map(Vec::len).max().unwrap_or(0);
    if let Some(col) = columns.iter().position(|c| c.len() != expected) {
        return Err(SignalError::LeadLengthMismatch {
            lead: headers[col].to_string(),
            expected,
            found: columns[col].len(),
        });
    }

    let leads = headers
        .iter()
        .zip(columns)
        .map(|(name, samples)| Lead {
            name: name.to_string(),
            samples,
        })
        .collect();
    EcgRecord::new(record_id, sampling_rate_hz, leads)
}

pub fn write_csv(record: &EcgRecord, path: &Path) -> Result<()> {
    let io_err = |source: std::io::Error| SignalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(e.into()))?;
    writer
        .write_record(record.leads().iter().map(|l| l.name.as_str()))
        .map_err(|e| io_err(e.into()))?;
    let mut row = Vec::with_capacity(record.leads().len());
    for i in 0..record.len() {
        row.clear();
        row.extend(record.leads().iter().map(|l| l.samples[i].to_string()));
        writer.write_record(&row).map_err(|e| io_err(e.into()))?;
    }
    writer.flush().map_err(io_err)?;
    Ok(())
}
