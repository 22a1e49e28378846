//! Temporal intersection over union of interval sets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Interval { start_s, end_s }
    }

    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }
}

impl From<(f64, f64)> for Interval {
    fn from((a, b): (f64, f64)) -> Self {
        Interval::new(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntervalError {
    #[error("interval {index} ({start}, {end}) must be finite with start < end")]
    Malformed { index: usize, start: f64, end: f64 },
}

/// Sorts and merges overlapping or touching intervals after validating each.
pub fn normalize(intervals: &[Interval]) -> Result<Vec<Interval>, IntervalError> {
    for (index, iv) in intervals.iter().enumerate() {
        if !(iv.start_s.is_finite() && iv.end_s.is_finite() && iv.start_s < iv.end_s) {
            return Err(IntervalError::Malformed {
                index,
                start: iv.start_s,
                end: iv.end_s,
            });
        }
    }
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut out: Vec<Interval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match out.last_mut() {
            Some(last) if iv.start_s <= last.end_s => last.end_s = last.end_s.max(iv.end_s),
            _ => out.push(iv),
        }
    }
    Ok(out)
}

fn total(intervals: &[Interval]) -> f64 {
    intervals.iter().map(Interval::len).sum()
}

/// Length of the intersection of two normalized sets (two-pointer sweep).
fn intersection(a: &[Interval], b: &[Interval]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let lo = a[i].start_s.max(b[j].start_s);
        let hi = a[i].end_s.min(b[j].end_s);
        if hi > lo {
            acc += hi - lo;
        }
        if a[i].end_s < b[j].end_s {
            i += 1;
        } else {
            j += 1;
        }
    }
    acc
}

/// `|pred ∩ gt| / |pred ∪ gt|` over interval unions; 1 when both are empty.
pub fn tiou(predicted: &[Interval], ground_truth: &[Interval]) -> Result<f64, IntervalError> {
    let a = normalize(predicted)?;
    let b = normalize(ground_truth)?;
    if a.is_empty() && b.is_empty() {
        return Ok(1.0);
    }
    let inter = intersection(&a, &b);
    let union = total(&a) + total(&b) - inter;
    Ok(if union > 0.0 { (inter / union).clamp(0.0, 1.0) } else { 0.0 })
}

pub fn tiou_pairs(predicted: &[(f64, f64)], ground_truth: &[(f64, f64)]) -> Result<f64, IntervalError> {
    let p: Vec<Interval> = predicted.iter().copied().map(Interval::from).collect();
    let g: Vec<Interval> = ground_truth.iter().copied().map(Interval::from).collect();
    tiou(&p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_cases() {
        assert_eq!(tiou_pairs(&[(2.0, 4.0)], &[(2.0, 4.0)]).unwrap(), 1.0);
        assert_eq!(tiou_pairs(&[(0.0, 1.0)], &[(2.0, 3.0)]).unwrap(), 0.0);
        assert!((tiou_pairs(&[(2.0, 4.0)], &[(3.0, 5.0)]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(tiou_pairs(&[], &[]).unwrap(), 1.0);
        assert_eq!(tiou_pairs(&[(0.0, 1.0)], &[]).unwrap(), 0.0);
    }

    #[test]
    fn malformed_is_an_error() {
        assert!(tiou_pairs(&[(3.0, 2.0)], &[(0.0, 1.0)]).is_err());
        assert!(tiou_pairs(&[(0.0, f64::NAN)], &[]).is_err());
        assert!(tiou_pairs(&[(1.0, 1.0)], &[]).is_err());
    }

    #[test]
    fn overlapping_input_is_merged() {
        let n = normalize(&[Interval::new(3.0, 5.0), Interval::new(0.0, 1.0), Interval::new(4.0, 6.0)]).unwrap();
        assert_eq!(n, vec![Interval::new(0.0, 1.0), Interval::new(3.0, 6.0)]);
    }

    fn arb_set() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0f64..50.0, 0.01f64..10.0), 0..6)
            .prop_map(|v| v.into_iter().map(|(a, l)| (a, a + l)).collect())
    }

    proptest! {
        #[test]
        fn symmetric(a in arb_set(), b in arb_set()) {
            prop_assert_eq!(tiou_pairs(&a, &b).unwrap(), tiou_pairs(&b, &a).unwrap());
        }

        #[test]
        fn identity(a in arb_set().prop_filter("non-empty", |a| !a.is_empty())) {
            prop_assert!((tiou_pairs(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn shift_invariant(a in arb_set(), b in arb_set(), k in -20.0f64..20.0) {
            let shift = |s: &[(f64, f64)]| s.iter().map(|&(x, y)| (x + k, y + k)).collect::<Vec<_>>();
            let d = tiou_pairs(&a, &b).unwrap() - tiou_pairs(&shift(&a), &shift(&b)).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn bounded(a in arb_set(), b in arb_set()) {
            let v = tiou_pairs(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
