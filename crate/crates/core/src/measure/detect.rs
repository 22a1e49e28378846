//! R-peak detection in the Pan-Tompkins family.
//!
//! Band-pass 5-15 Hz, five-point derivative, squaring, 150 ms moving-window
//! integration, then adaptive dual thresholds with searchback. Every
//! threshold is relative to the integrated signal, so scaling the input by a
//! positive constant leaves the detected indices unchanged.

use super::filter::{bandpass_qrs, derivative5, median, moving_average, ms_to_samples};
use super::MeasureError;

const REFRACTORY_MS: f64 = 200.0;
const MWI_MS: f64 = 150.0;
const REFINE_MS: f64 = 80.0;

/// Detected R-peak sample indices, strictly increasing and at least 200 ms apart.
pub fn detect_r_peaks(samples: &[f64], sampling_rate_hz: f64) -> Result<Vec<usize>, MeasureError> {
    check_series(samples, sampling_rate_hz)?;
    let fs = sampling_rate_hz;
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(Vec::new());
    }

    let filtered = bandpass_qrs(samples, fs);
    let squared: Vec<f64> = derivative5(&filtered).iter().map(|d| d * d).collect();
    let mwi = moving_average(&squared, ms_to_samples(MWI_MS, fs).max(1));
    let peak_max = mwi.iter().cloned().fold(0.0, f64::max);
    if peak_max <= 0.0 {
        return Ok(Vec::new());
    }

    let candidates: Vec<usize> = (1..mwi.len() - 1)
        .filter(|&i| mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1])
        .collect();
    let integrated = threshold_peaks(&mwi, &candidates, ms_to_samples(REFRACTORY_MS, fs), peak_max);
    Ok(refine(samples, &integrated, fs))
}

pub(crate) fn check_series(samples: &[f64], fs: f64) -> Result<(), MeasureError> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(MeasureError::InvalidSamplingRate(fs));
    }
    let required = (2.0 * fs).round() as usize;
    if samples.len() < required {
        return Err(MeasureError::SeriesTooShort {
            samples: samples.len(),
            required,
        });
    }
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(MeasureError::NonFinite { index });
    }
    Ok(())
}

fn threshold_peaks(mwi: &[f64], candidates: &[usize], refractory: usize, peak_max: f64) -> Vec<usize> {
    let mut spki = 0.5 * peak_max;
    let mut npki = 0.1 * spki;
    let mut thr1 = npki + 0.25 * (spki - npki);
    let mut beats: Vec<usize> = Vec::new();
    // Refractory period counts from the first candidate of a group, so that
    // replacing a beat by a taller neighbour cannot drift into the next beat.
    let mut anchor = 0usize;

    for (ci, &c) in candidates.iter().enumerate() {
        let v = mwi[c];
        if let Some(&last) = beats.last() {
            if c - anchor < refractory {
                if v > mwi[last] {
                    *beats.last_mut().unwrap() = c;
                }
                continue;
            }
            // Searchback for a missed beat when the gap is unusually long.
            if beats.len() >= 2 {
                let recent = &beats[beats.len().saturating_sub(9)..];
                let rr_avg = (recent[recent.len() - 1] - recent[0]) as f64 / (recent.len() - 1) as f64;
                if (c - last) as f64 > 1.66 * rr_avg {
                    let thr2 = 0.5 * thr1;
                    let missed = candidates[..ci]
                        .iter()
                        .copied()
                        .filter(|&m| m >= last + refractory && m + refractory <= c && mwi[m] > thr2)
                        .max_by(|&a, &b| mwi[a].total_cmp(&mwi[b]));
                    if let Some(m) = missed {
                        beats.push(m);
                        anchor = m;
                        spki = 0.25 * mwi[m] + 0.75 * spki;
                    }
                }
            }
        }
        if v > thr1 {
            beats.push(c);
            anchor = c;
            spki = 0.125 * v + 0.875 * spki;
        } else {
            npki = 0.125 * v + 0.875 * npki;
        }
        thr1 = npki + 0.25 * (spki - npki);
    }
    beats
}

/// Moves each integrated-signal peak to the dominant deflection of the raw
/// signal nearby, preferring the positive one, then enforces the refractory spacing.
fn refine(x: &[f64], peaks: &[usize], fs: f64) -> Vec<usize> {
    let half = ms_to_samples(REFINE_MS, fs).max(1);
    let mut refined: Vec<(usize, f64)> = peaks
        .iter()
        .map(|&p| {
            let lo = p.saturating_sub(half);
            let hi = (p + half).min(x.len() - 1);
            let mut window = x[lo..=hi].to_vec();
            let base = median(&mut window).unwrap_or(0.0);
            let (mut pos, mut neg) = (lo, lo);
            for i in lo..=hi {
                if x[i] - base > x[pos] - base {
                    pos = i;
                }
                if x[i] - base < x[neg] - base {
                    neg = i;
                }
            }
            let up = x[pos] - base;
            let down = base - x[neg];
            if up >= 0.5 * down {
                (pos, up)
            } else {
                (neg, down)
            }
        })
        .collect();
    refined.sort_by_key(|&(i, _)| i);

    let refractory = ms_to_samples(REFRACTORY_MS, fs);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(refined.len());
    for (i, h) in refined {
        match out.last_mut() {
            Some(last) if i < last.0 + refractory => {
                if h > last.1 {
                    *last = (i, h);
                }
            }
            _ => out.push((i, h)),
        }
    }
    out.into_iter().map(|(i, _)| i).collect()
}
