//! Numeric and label claims in free text and in tool outputs.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agent::mentioned_codes;
use crate::classify::default_registry;
use crate::tool::ToolOutput;

pub const RELATIVE_TOLERANCE: f64 = 0.05;
pub const ABSOLUTE_TOLERANCE_MS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Bpm,
    Ms,
    S,
    MilliVolt,
    Hz,
    Beats,
}

impl Unit {
    fn parse(s: &str) -> Option<Unit> {
        Some(match s.to_ascii_lowercase().as_str() {
            "bpm" => Unit::Bpm,
            "ms" => Unit::Ms,
            "s" => Unit::S,
            "mv" => Unit::MilliVolt,
            "hz" => Unit::Hz,
            "beat" | "beats" => Unit::Beats,
            _ => return None,
        })
    }

}

/// How far a claimed value may sit from the tool value and still agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerance {
    pub relative: f64,
    pub absolute_ms: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { relative: RELATIVE_TOLERANCE, absolute_ms: ABSOLUTE_TOLERANCE_MS }
    }
}

impl Tolerance {
    /// Absolute floor in `unit`; only durations have one.
    fn floor(&self, unit: Unit) -> f64 {
        match unit {
            Unit::Ms => self.absolute_ms,
            Unit::S => self.absolute_ms / 1000.0,
            _ => 0.0,
        }
    }

    pub fn accepts(&self, claimed: f64, actual: f64, unit: Unit) -> bool {
        let tol = (self.relative * actual.abs()).max(self.floor(unit));
        (claimed - actual).abs() <= tol + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    HeartRate,
    Rr,
    Pr,
    Qrs,
    Qt,
    Qtc,
    St,
    BeatCount,
    /// Explanation interval bound.
    Time,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub quantity: Option<Quantity>,
    pub value: f64,
    pub unit: Unit,
    /// Decimals as written; tool values use `None`.
    pub decimals: Option<usize>,
}

impl Value {
    fn known(quantity: Quantity, value: f64, unit: Unit) -> Self {
        Value { quantity: Some(quantity), value, unit, decimals: None }
    }

    fn compatible(&self, other: &Value) -> bool {
        self.unit == other.unit
            && match (self.quantity, other.quantity) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }

    /// Within ±5% relative or the unit's absolute floor, whichever is larger.
    pub fn agrees(&self, other: &Value) -> bool {
        self.agrees_within(other, &Tolerance::default())
    }

    pub fn agrees_within(&self, other: &Value, tolerance: &Tolerance) -> bool {
        self.compatible(other) && tolerance.accepts(self.value, other.value, self.unit)
    }

    /// `other` printed at this value's precision equals this value.
    pub fn exact(&self, other: &Value) -> bool {
        let d = self.decimals.unwrap_or(3) as i32;
        let scale = 10f64.powi(d);
        self.compatible(other) && ((other.value * scale).round() - (self.value * scale).round()).abs() < 0.5
    }
}

pub fn within_tolerance(claimed: f64, actual: f64, unit: Unit) -> bool {
    Tolerance::default().accepts(claimed, actual, unit)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Claims {
    pub values: Vec<Value>,
    pub labels: BTreeSet<String>,
}

impl Claims {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty() && self.labels.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len() + self.labels.len()
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(-?\d+(?:\.(\d+))?)\s*(bpm|ms|mv|hz|beats?|s)\b").unwrap())
}

/// Keyword to quantity, most specific first.
const QUANTITY_WORDS: &[(&str, Quantity)] = &[
    ("heart rate", Quantity::HeartRate),
    ("pulse", Quantity::HeartRate),
    ("between beats", Quantity::Rr),
    ("rr", Quantity::Rr),
    ("pr", Quantity::Pr),
    ("qrs", Quantity::Qrs),
    ("qtc", Quantity::Qtc),
    ("qt", Quantity::Qt),
    ("st", Quantity::St),
];

fn quantity_before(prefix: &str, unit: Unit) -> Option<Quantity> {
    match unit {
        Unit::Beats => return Some(Quantity::BeatCount),
        Unit::S => return Some(Quantity::Time),
        Unit::Hz => return Some(Quantity::Frequency),
        Unit::Bpm => return Some(Quantity::HeartRate),
        _ => {}
    }
    let lower = prefix.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    // nearest keyword wins; two-word keywords are checked on adjacent pairs
    for i in (0..words.len()).rev() {
        for (kw, q) in QUANTITY_WORDS {
            let parts: Vec<&str> = kw.split(' ').collect();
            if i + 1 >= parts.len() && words[i + 1 - parts.len()..=i] == parts[..] {
                return Some(*q);
            }
        }
    }
    None
}

fn label_names() -> &'static [(String, String)] {
    static CELL: OnceLock<Vec<(String, String)>> = OnceLock::new();
    CELL.get_or_init(|| {
        default_registry()
            .into_iter()
            .map(|c| {
                let name = c.display_name.split(" (").next().unwrap_or(&c.display_name).to_lowercase();
                (name, c.code)
            })
            .collect()
    })
}

/// Class codes written as codes or display names.
pub fn label_claims(text: &str) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = mentioned_codes(text).into_iter().collect();
    let lower = text.to_lowercase();
    for (name, code) in label_names() {
        if lower.contains(name.as_str()) {
            out.insert(code.clone());
        }
    }
    out
}

pub fn extract_claims(text: &str) -> Claims {
    let mut values = Vec::new();
    let mut last_end = 0;
    for cap in number_re().captures_iter(text) {
        let whole = cap.get(0).unwrap();
        let Some(unit) = Unit::parse(&cap[3]) else { continue };
        let Ok(value) = cap[1].parse::<f64>() else { continue };
        let prefix = &text[last_end..whole.start()];
        let decimals = Some(cap.get(2).map_or(0, |d| d.as_str().len()));
        values.push(Value { quantity: quantity_before(prefix, unit), value, unit, decimals });
        last_end = whole.end();
    }
    Claims { values, labels: label_claims(text) }
}

/// What a tool output licenses a response to say.
pub fn tool_claims(output: &ToolOutput) -> Claims {
    let mut c = Claims::default();
    if let Some(m) = output.measurement() {
        let fields = [
            (Quantity::HeartRate, m.heart_rate_bpm, Unit::Bpm),
            (Quantity::Rr, m.rr_mean_ms, Unit::Ms),
            (Quantity::Rr, m.rr_std_ms, Unit::Ms),
            (Quantity::Pr, m.pr_interval_ms, Unit::Ms),
            (Quantity::Qrs, m.qrs_duration_ms, Unit::Ms),
            (Quantity::Qt, m.qt_interval_ms, Unit::Ms),
            (Quantity::Qtc, m.qtc_interval_ms, Unit::Ms),
            (Quantity::St, m.st_level_mv, Unit::MilliVolt),
        ];
        for (q, v, u) in fields {
            if let Some(v) = v {
                c.values.push(Value::known(q, v, u));
            }
        }
        c.values.push(Value::known(Quantity::BeatCount, m.beat_count as f64, Unit::Beats));
    }
    if let Some(cl) = output.classification() {
        c.labels.extend(cl.predicted.iter().cloned());
    }
    if let Some(e) = output.explanation() {
        c.labels.insert(e.class_code.clone());
        for i in &e.intervals {
            c.values.push(Value::known(Quantity::Time, i.start_s, Unit::S));
            c.values.push(Value::known(Quantity::Time, i.end_s, Unit::S));
        }
        if let Some((lo, hi)) = e.frequency_band_hz {
            c.values.push(Value::known(Quantity::Frequency, lo, Unit::Hz));
            c.values.push(Value::known(Quantity::Frequency, hi, Unit::Hz));
        }
    }
    c
}

/// Claims in `response` that `licensed` does not support.
pub fn unsupported(response: &Claims, licensed: &Claims, tolerance: &Tolerance) -> (Vec<Value>, Vec<String>) {
    let values = response
        .values
        .iter()
        .filter(|v| !licensed.values.iter().any(|l| v.agrees_within(l, tolerance)))
        .copied()
        .collect();
    let labels = response.labels.iter().filter(|l| !licensed.labels.contains(*l)).cloned().collect();
    (values, labels)
}
