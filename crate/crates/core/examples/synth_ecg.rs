//! Writes a synthetic 12-lead record as CSV and as a WFDB header/data pair,
//! then reads both back.

use ecg_agent::signal::{load_record, synthesize_with, write_record, LeadConfig, LoadOptions, RecordFormat, SynthParams};

fn main() {
    let params = SynthParams { lead_config: LeadConfig::TwelveLead, rr_jitter: 0.03, ..SynthParams::new(64.0, 10.0, 500.0, 0.03, 21) };
    let (record, truth) = synthesize_with(&params).expect("valid parameters");
    let dir = std::env::temp_dir().join("ecg-agent-synth-example");
    std::fs::create_dir_all(&dir).expect("temp dir");

    let csv = dir.join("synthetic.csv");
    write_record(&record, &csv, RecordFormat::Csv).expect("csv written");
    let hea = dir.join("synthetic.hea");
    write_record(&record, &hea, RecordFormat::WfdbSubset).expect("wfdb written");

    let from_csv = load_record(&csv, RecordFormat::Csv, &LoadOptions { sampling_rate_hz: Some(500.0), record_id: None }).expect("csv loads");
    let from_wfdb = load_record(&hea, RecordFormat::WfdbSubset, &LoadOptions::default()).expect("wfdb loads");
    println!("{} beats, first R peaks {:?}", truth.beats.len(), &truth.r_peaks()[..3]);
    for (name, r) in [("csv", &from_csv), ("wfdb", &from_wfdb)] {
        let worst = record
            .leads()
            .iter()
            .zip(r.leads())
            .flat_map(|(a, b)| a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        println!("{name}: {} leads x {} samples, max difference {worst:.2e} mV", r.leads().len(), r.len());
    }
    println!("files in {}", dir.display());
}
