//! A deliberately small WFDB subset: one `.hea` header and one interleaved
//! format-16 `.dat` file, single segment. Anything else is rejected.
//!
//! This covers PTB-XL records such as
//! `00001_hr.dat 16 1000.0(0)/mV 16 0 -119 1508 0 I`.

use std::path::{Path, PathBuf};

use super::{EcgRecord, Lead, Result, SignalError};

const WFDB_INVALID_SAMPLE: i16 = i16::MIN;
const DEFAULT_GAIN: f64 = 200.0;
const DEFAULT_FS: f64 = 250.0;

#[derive(Debug, Clone)]
pub struct WfdbWriteOptions {
    /// ADC units per millivolt.
    pub gain: f64,
}

impl Default for WfdbWriteOptions {
    fn default() -> Self {
        WfdbWriteOptions { gain: 1000.0 }
    }
}

#[derive(Debug)]
struct SignalSpec {
    file_name: String,
    gain: f64,
    baseline: i32,
    unit_scale: f64,
    checksum: Option<i32>,
    description: String,
}

fn header_path(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("hea") => path.to_path_buf(),
        Some("dat") => path.with_extension("hea"),
        _ => {
            let mut p = path.as_os_str().to_owned();
            p.push(".hea");
            PathBuf::from(p)
        }
    }
}

pub fn read_wfdb(path: &Path) -> Result<EcgRecord> {
    let hea = header_path(path);
    let text = std::fs::read_to_string(&hea).map_err(|source| SignalError::Io {
        path: hea.clone(),
        source,
    })?;
    let err = |line: u64, byte: u64, message: String| SignalError::Parse {
        path: hea.clone(),
        line,
        byte,
        message,
    };

    let mut lines = Vec::new();
    let mut offset = 0u64;
    for (idx, raw) in text.split_inclusive('\n').enumerate() {
        let content = raw.trim_end_matches(['\n', '\r']);
        let trimmed = content.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            lines.push((idx as u64 + 1, offset, trimmed));
        }
        offset += raw.len() as u64;
    }
    let (rec_line, rec_byte, record_line) = *lines
        .first()
        .ok_or_else(|| err(1, 0, "malformed header: no record line".into()))?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(err(rec_line, rec_byte, "malformed header: record line needs name and signal count".into()));
    }
    let record_name = fields[0];
    if record_name.contains('/') {
        return Err(SignalError::Unsupported("multi-segment records".into()));
    }
    let nsig: usize = fields[1]
        .parse()
        .map_err(|_| err(rec_line, rec_byte, format!("malformed header: signal count `{}`", fields[1])))?;
    if nsig == 0 {
        return Err(SignalError::Unsupported("record without signals".into()));
    }
    let fs = match fields.get(2) {
        None => DEFAULT_FS,
        Some(f) => {
            if f.contains('/') || f.contains('(') {
                return Err(SignalError::Unsupported(format!("sampling frequency spec `{f}`")));
            }
            f.parse()
                .map_err(|_| err(rec_line, rec_byte, format!("malformed header: sampling frequency `{f}`")))?
        }
    };
    let declared_len: Option<usize> = match fields.get(3) {
        None => None,
        Some(n) => Some(
            n.parse()
                .map_err(|_| err(rec_line, rec_byte, format!("malformed header: sample count `{n}`")))?,
        ),
    };

    if lines.len() < 1 + nsig {
        return Err(err(
            rec_line,
            rec_byte,
            format!("malformed header: {nsig} signals declared, {} signal lines", lines.len() - 1),
        ));
    }
    let mut specs = Vec::with_capacity(nsig);
    for &(line, byte, sig_line) in &lines[1..=nsig] {
        specs.push(parse_signal_line(sig_line).map_err(|m| err(line, byte, m))?);
    }
    let file_name = specs[0].file_name.clone();
    if specs.iter().any(|s| s.file_name != file_name) {
        return Err(SignalError::Unsupported("signals spread over several .dat files".into()));
    }

    let dat = hea.with_file_name(&file_name);
    let bytes = std::fs::read(&dat).map_err(|source| SignalError::Io {
        path: dat.clone(),
        source,
    })?;
    let frame = 2 * nsig;
    if bytes.len() % frame != 0 {
        return Err(SignalError::Parse {
            path: dat.clone(),
            line: 0,
            byte: (bytes.len() - bytes.len() % frame) as u64,
            message: "trailing partial frame".into(),
        });
    }
    let n = bytes.len() / frame;
    if let Some(declared) = declared_len {
        if declared != n {
            return Err(SignalError::LeadLengthMismatch {
                lead: specs[0].description.clone(),
                expected: declared,
                found: n,
            });
        }
    }

    let mut raw: Vec<Vec<i16>> = vec![Vec::with_capacity(n); nsig];
    for (i, chunk) in bytes.chunks_exact(2).enumerate() {
        let v = i16::from_le_bytes([chunk[0], chunk[1]]);
        if v == WFDB_INVALID_SAMPLE {
            return Err(SignalError::Parse {
                path: dat.clone(),
                line: 0,
                byte: (2 * i) as u64,
                message: format!("invalid (missing) sample in signal {}", specs[i % nsig].description),
            });
        }
        raw[i % nsig].push(v);
    }

    let mut leads = Vec::with_capacity(nsig);
    for (spec, adc) in specs.iter().zip(raw) {
        if let Some(expected) = spec.checksum {
            let sum = adc.iter().fold(0i32, |acc, &v| acc.wrapping_add(v as i32)) as i16 as i32;
            if sum != expected as i16 as i32 {
                return Err(SignalError::Parse {
                    path: dat.clone(),
                    line: 0,
                    byte: 0,
                    message: format!("checksum mismatch for {}: header {expected}, data {sum}", spec.description),
                });
            }
        }
        let samples = adc
            .iter()
            .map(|&v| (v as i32 - spec.baseline) as f64 / spec.gain * spec.unit_scale)
            .collect();
        leads.push(Lead {
            name: spec.description.clone(),
            samples,
        });
    }
    EcgRecord::new(record_name, fs, leads)
}

fn parse_signal_line(line: &str) -> std::result::Result<SignalSpec, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err("malformed signal line: needs file name and format".into());
    }
    if fields[1] != "16" {
        return Err(format!("unsupported signal format `{}` (only 16)", fields[1]));
    }
    let (gain, baseline_opt, units) = match fields.get(2) {
        None => (DEFAULT_GAIN, None, "mV".to_string()),
        Some(spec) => parse_gain(spec)?,
    };
    let adc_zero: i32 = match fields.get(4) {
        None => 0,
        Some(z) => z.parse().map_err(|_| format!("malformed ADC zero `{z}`"))?,
    };
    let checksum = match fields.get(6) {
        None => None,
        Some(c) => Some(c.parse().map_err(|_| format!("malformed checksum `{c}`"))?),
    };
    if let Some(block) = fields.get(7) {
        if *block != "0" {
            return Err(format!("unsupported block size `{block}`"));
        }
    }
    let description = if fields.len() > 8 {
        fields[8..].join(" ")
    } else {
        return Err("signal line lacks a lead description".into());
    };
    let unit_scale = match units.as_str() {
        "mV" => 1.0,
        "uV" | "µV" => 1e-3,
        "V" => 1e3,
        other => return Err(format!("unsupported physical unit `{other}`")),
    };
    Ok(SignalSpec {
        file_name: fields[0].to_string(),
        gain: if gain == 0.0 { DEFAULT_GAIN } else { gain },
        baseline: baseline_opt.unwrap_or(adc_zero),
        unit_scale,
        checksum,
        description,
    })
}

/// `gain[(baseline)][/units]`
fn parse_gain(spec: &str) -> std::result::Result<(f64, Option<i32>, String), String> {
    let (head, units) = match spec.split_once('/') {
        Some((h, u)) => (h, u.to_string()),
        None => (spec, "mV".to_string()),
    };
    let (gain_str, baseline) = match head.split_once('(') {
        Some((g, rest)) => {
            let b = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("malformed baseline in `{spec}`"))?;
            (g, Some(b.parse().map_err(|_| format!("malformed baseline in `{spec}`"))?))
        }
        None => (head, None),
    };
    let gain: f64 = gain_str.parse().map_err(|_| format!("malformed gain `{gain_str}`"))?;
    if !(gain.is_finite() && gain >= 0.0) {
        return Err(format!("invalid gain `{gain_str}`"));
    }
    Ok((gain, baseline, units))
}

/// Writes `<name>.hea` and `<name>.dat` into `dir` and returns the header path.
///
/// Samples are quantised to `round(mV * gain)`; records whose samples already
/// lie on that grid (such as anything read back from this writer) round-trip
/// bit-exactly.
pub fn write_wfdb(record: &EcgRecord, dir: &Path, name: &str, options: &WfdbWriteOptions) -> Result<PathBuf> {
    let gain = options.gain;
    let nsig = record.leads().len();
    let n = record.len();
    let mut adc: Vec<Vec<i16>> = Vec::with_capacity(nsig);
    for lead in record.leads() {
        let mut q = Vec::with_capacity(n);
        for &v in &lead.samples {
            let scaled = (v * gain).round();
            if !(-32767.0..=32767.0).contains(&scaled) {
                return Err(SignalError::OutOfRange {
                    name: "sample",
                    value: v,
                    range: "the 16-bit range at the chosen gain",
                });
            }
            q.push(scaled as i16);
        }
        adc.push(q);
    }

    let dat_name = format!("{name}.dat");
    let mut bytes = Vec::with_capacity(n * nsig * 2);
    for i in 0..n {
        for lead in &adc {
            bytes.extend_from_slice(&lead[i].to_le_bytes());
        }
    }
    let dat = dir.join(&dat_name);
    std::fs::write(&dat, bytes).map_err(|source| SignalError::Io { path: dat, source })?;

    let mut header = format!("{name} {nsig} {} {n}\n", record.sampling_rate_hz());
    for (lead, q) in record.leads().iter().zip(&adc) {
        let checksum = q.iter().fold(0i32, |acc, &v| acc.wrapping_add(v as i32)) as i16;
        header.push_str(&format!(
            "{dat_name} 16 {gain}(0)/mV 16 0 {} {checksum} 0 {}\n",
            q[0], lead.name
        ));
    }
    let hea = dir.join(format!("{name}.hea"));
    std::fs::write(&hea, header).map_err(|source| SignalError::Io {
        path: hea.clone(),
        source,
    })?;
    Ok(hea)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{LeadConfig, STANDARD_LEADS};

    fn on_grid_record(n: usize) -> EcgRecord {
        let leads = STANDARD_LEADS
            .iter()
            .enumerate()
            .map(|(i, name)| Lead {
                name: name.to_string(),
                samples: (0..n)
                    .map(|k| (((k * 37 + i * 11) % 2001) as i32 - 1000) as f64 / 1000.0)
                    .collect(),
            })
            .collect();
        EcgRecord::new("rt", 500.0, leads).unwrap()
    }

    #[test]
    fn twelve_lead_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rec = on_grid_record(5000);
        let hea = write_wfdb(&rec, dir.path(), "rt", &WfdbWriteOptions::default()).unwrap();
        let back = read_wfdb(&hea).unwrap();
        assert_eq!(back.lead_config(), LeadConfig::TwelveLead);
        assert_eq!(back.sampling_rate_hz(), 500.0);
        for (a, b) in rec.leads().iter().zip(back.leads()) {
            assert_eq!(a.name, b.name);
            let ab: Vec<u64> = a.samples.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.samples.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        // Re-writing a loaded record reproduces the data file byte for byte.
        let first = std::fs::read(dir.path().join("rt.dat")).unwrap();
        let sub = dir.path().join("again");
        std::fs::create_dir(&sub).unwrap();
        write_wfdb(&back, &sub, "rt", &WfdbWriteOptions::default()).unwrap();
        assert_eq!(first, std::fs::read(sub.join("rt.dat")).unwrap());
        // Base name without extension also resolves.
        assert!(read_wfdb(&dir.path().join("rt")).is_ok());
    }

    #[test]
    fn reads_ptbxl_style_header() {
        let dir = tempfile::tempdir().unwrap();
        let samples: [i16; 4] = [-119, 10, 20, -30];
        let mut bytes = Vec::new();
        for s in samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        std::fs::write(dir.path().join("00001_hr.dat"), bytes).unwrap();
        let sum: i32 = samples.iter().map(|&v| v as i32).sum();
        std::fs::write(
            dir.path().join("00001_hr.hea"),
            format!("# comment\n00001_hr 1 500 4\n00001_hr.dat 16 1000.0(0)/mV 16 0 -119 {sum} 0 I\n"),
        )
        .unwrap();
        let rec = read_wfdb(&dir.path().join("00001_hr.hea")).unwrap();
        assert_eq!(rec.lead_config(), LeadConfig::LeadI);
        assert_eq!(rec.leads()[0].samples, vec![-0.119, 0.01, 0.02, -0.03]);
    }

    #[test]
    fn rejects_unsupported_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.dat"), [0u8; 4]).unwrap();
        std::fs::write(dir.path().join("a.hea"), "a 1 500 2\na.dat 212 200 12 0 0 0 0 I\n").unwrap();
        assert!(matches!(read_wfdb(&dir.path().join("a.hea")), Err(SignalError::Parse { line: 2, .. })));

        std::fs::write(dir.path().join("b.hea"), "b/2 1 500 2\n").unwrap();
        assert!(matches!(read_wfdb(&dir.path().join("b.hea")), Err(SignalError::Unsupported(_))));

        std::fs::write(dir.path().join("c.hea"), "c x 500\n").unwrap();
        assert!(matches!(
            read_wfdb(&dir.path().join("c.hea")),
            Err(SignalError::Parse { line: 1, byte: 0, .. })
        ));

        std::fs::write(dir.path().join("d.dat"), [0u8; 8]).unwrap();
        std::fs::write(dir.path().join("d.hea"), "d 1 500 3\nd.dat 16 200 16 0 0 0 0 II\n").unwrap();
        assert!(matches!(
            read_wfdb(&dir.path().join("d.hea")),
            Err(SignalError::LeadLengthMismatch { expected: 3, found: 4, .. })
        ));

        std::fs::write(dir.path().join("e.dat"), [0u8, 0, 0, 0x80]).unwrap();
        std::fs::write(dir.path().join("e.hea"), "e 1 500 2\ne.dat 16 200 16 0 0 0 0 II\n").unwrap();
        assert!(matches!(
            read_wfdb(&dir.path().join("e.hea")),
            Err(SignalError::Parse { byte: 2, .. })
        ));
    }

    #[test]
    fn checksum_is_verified() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("k.dat"), [1u8, 0, 2, 0]).unwrap();
        std::fs::write(dir.path().join("k.hea"), "k 1 500 2\nk.dat 16 200 16 0 1 99 0 I\n").unwrap();
        assert!(read_wfdb(&dir.path().join("k.hea")).is_err());
        std::fs::write(dir.path().join("k.hea"), "k 1 500 2\nk.dat 16 200 16 0 1 3 0 I\n").unwrap();
        assert!(read_wfdb(&dir.path().join("k.hea")).is_ok());
    }
}
