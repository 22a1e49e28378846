//! Per-beat PQRST delineation around known R peaks.
//!
//! QRS bounds come from where the slope of the lightly smoothed signal
//! settles below 5% of the QRS maximum slope. P onset and T offset use the
//! tangent method: the tangent at the steepest point of the wave is
//! intersected with the PR-segment baseline. A landmark that cannot be
//! placed consistently is left absent.

use super::filter::{gradient, median, moving_average, ms_to_samples};
use crate::signal::BeatFiducials;

const SLOPE_FRACTION: f64 = 0.05;
const QUIET_MS: f64 = 16.0;
const PRESENCE_FRACTION: f64 = 0.05;

pub fn delineate(samples: &[f64], sampling_rate_hz: f64, r_peaks: &[usize]) -> Vec<BeatFiducials> {
    if r_peaks.is_empty() || samples.len() < 3 {
        return Vec::new();
    }
    let fs = sampling_rate_hz;
    let ms = |v: f64| ms_to_samples(v, fs);
    let smooth = moving_average(samples, ms(8.0).max(1) | 1);
    let heavy = moving_average(samples, ms(40.0).max(1) | 1);
    let d = gradient(&smooth);
    let n = samples.len();
    // Noise floor for the slope test. The second difference of the raw
    // signal is dominated by white noise rather than by the waves themselves.
    let width = ms(8.0).max(1) | 1;
    let slope_noise = {
        let mut dd: Vec<f64> = samples.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).collect();
        let sigma = median(&mut dd).unwrap_or(0.0) / (0.6745 * 6f64.sqrt());
        3.0 * sigma / width as f64
    };

    let mut beats = Vec::with_capacity(r_peaks.len());
    for (k, &r) in r_peaks.iter().enumerate() {
        let rr_prev = k.checked_sub(1).map(|p| r - r_peaks[p]);
        let rr_next = r_peaks.get(k + 1).map(|&q| q - r);
        let rr_local = rr_prev.or(rr_next).unwrap_or(ms(1000.0));

        let lo = r.saturating_sub(ms(100.0));
        let hi = (r + ms(100.0)).min(n - 1);
        let dmax = d[lo..=hi].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let thr = (SLOPE_FRACTION * dmax).max(slope_noise);
        let quiet = ms(QUIET_MS).max(1);

        let qrs_onset = (1..=ms(150.0))
            .filter_map(|back| r.checked_sub(back))
            .find(|&j| j >= quiet && (j - quiet..=j).all(|i| d[i].abs() < thr));
        // After the last steep sample the slope either settles or, when an
        // ST shift follows, reverses; either marks the J point.
        let steep_end = (r..=(r + ms(120.0)).min(n - 1)).rev().find(|&i| d[i].abs() >= 0.25 * dmax).unwrap_or(r);
        let qrs_offset = (1..=ms(200.0))
            .map(|fwd| r + fwd)
            .take_while(|&j| j + quiet < n)
            .find(|&j| {
                (j..=j + quiet).all(|i| d[i].abs() < thr)
                    || (j > steep_end && d[j].abs() < 0.25 * dmax && d[j] * d[j - 1] < 0.0)
            });

        let mut fid = BeatFiducials {
            r_peak: r,
            qrs_onset,
            qrs_offset,
            ..Default::default()
        };
        let Some(on) = qrs_onset else {
            beats.push(fid);
            continue;
        };
        let b_lo = on.saturating_sub(ms(20.0));
        let baseline = median(&mut samples[b_lo..=on].to_vec()).unwrap_or(samples[on]);
        let r_amp = (samples[r] - baseline).abs();

        // P wave: positive deflection before the QRS.
        let p_lo = r
            .saturating_sub(ms(300.0))
            .max(r.saturating_sub((0.45 * rr_prev.unwrap_or(rr_local) as f64) as usize));
        let p_hi = r.saturating_sub(ms(60.0)).min(on.saturating_sub(1));
        if p_hi > p_lo + 4 {
            let m = argmax_by(p_lo, p_hi, |i| smooth[i] - baseline);
            let interior = m > p_lo + 1 && m + 1 < p_hi;
            if interior && heavy[m] - baseline >= PRESENCE_FRACTION * r_amp {
                let k = argmax_by(p_lo, m, |i| d[i]);
                if d[k] > 0.0 {
                    let t = k as f64 - (smooth[k] - baseline) / d[k];
                    if t >= 0.0 && (t.round() as usize) < m {
                        fid.p_onset = Some(t.round() as usize);
                        fid.p_peak = Some(m);
                    }
                }
            }
        }

        // T wave: dominant deflection of either polarity after the QRS.
        let t_lo = r + ms(120.0);
        let t_hi = (r + ms(500.0))
            .min(r + (0.7 * rr_next.unwrap_or(rr_local) as f64) as usize)
            .min(n - 1);
        if t_hi > t_lo + 4 {
            let m = argmax_by(t_lo, t_hi, |i| (smooth[i] - baseline).abs());
            let interior = m > t_lo + 1 && m + 1 < t_hi;
            let sign = (smooth[m] - baseline).signum();
            if interior && (heavy[m] - baseline) * sign >= PRESENCE_FRACTION * r_amp {
                let end = (m + ms(250.0))
                    .min(r_peaks.get(k + 1).map_or(n - 1, |&q| q.saturating_sub(ms(100.0))))
                    .min(n - 1);
                fid.t_peak = Some(m);
                if end > m + 1 {
                    // Steepest return towards baseline.
                    let k = argmax_by(m, end, |i| -sign * d[i]);
                    if -sign * d[k] > 0.0 {
                        let t = k as f64 - (smooth[k] - baseline) / d[k];
                        let idx = t.round();
                        if idx > m as f64 && idx < n as f64 {
                            fid.t_offset = Some(idx as usize);
                        }
                    }
                }
            }
        }
        enforce_order(&mut fid);
        beats.push(fid);
    }
    beats
}

fn argmax_by(lo: usize, hi: usize, f: impl Fn(usize) -> f64) -> usize {
    let mut best = lo;
    let mut best_v = f(lo);
    for i in lo + 1..=hi {
        let v = f(i);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Drops landmarks that would break the strict PQRST order.
fn enforce_order(f: &mut BeatFiducials) {
    if f.qrs_onset.is_some_and(|on| on >= f.r_peak) {
        f.qrs_onset = None;
    }
    if f.qrs_offset.is_some_and(|off| off <= f.r_peak) {
        f.qrs_offset = None;
    }
    let before_qrs = f.qrs_onset.unwrap_or(f.r_peak);
    if !matches!((f.p_onset, f.p_peak), (Some(a), Some(b)) if a < b && b < before_qrs) {
        f.p_onset = None;
        f.p_peak = None;
    }
    let after_qrs = f.qrs_offset.unwrap_or(f.r_peak);
    if f.t_peak.is_some_and(|t| t <= after_qrs) {
        f.t_peak = None;
    }
    if f.t_offset.is_some_and(|t| f.t_peak.is_none_or(|p| t <= p)) {
        f.t_offset = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::detect_r_peaks;
    use crate::signal::{synthesize_ecg, synthesize_with, GroundTruthFiducials, SynthParams};

    fn max_error_ms(found: &[BeatFiducials], gt: &GroundTruthFiducials) -> f64 {
        assert_eq!(found.len(), gt.beats.len());
        let mut worst = 0usize;
        for (f, t) in found.iter().zip(&gt.beats) {
            let pairs = [
                (f.p_onset, t.p_onset),
                (f.p_peak, t.p_peak),
                (f.qrs_onset, t.qrs_onset),
                (Some(f.r_peak), Some(t.r_peak)),
                (f.qrs_offset, t.qrs_offset),
                (f.t_peak, t.t_peak),
                (f.t_offset, t.t_offset),
            ];
            for (a, b) in pairs {
                let (a, b) = (a.expect("landmark found"), b.unwrap());
                worst = worst.max(a.abs_diff(b));
            }
        }
        worst as f64 * 1000.0 / gt.sampling_rate_hz
    }

    #[test]
    fn noiseless_sixty_bpm_within_twenty_ms() {
        let (rec, gt) = synthesize_ecg(60.0, 10.0, 500.0, 0.0, 0).unwrap();
        let x = &rec.measurement_lead().samples;
        let fid = delineate(x, 500.0, &detect_r_peaks(x, 500.0).unwrap());
        let err = max_error_ms(&fid, &gt);
        assert!(err <= 20.0, "{err} ms");
    }

    #[test]
    fn suppressed_p_wave_is_absent() {
        let params = SynthParams { p_wave: false, ..SynthParams::new(60.0, 10.0, 500.0, 0.0, 0) };
        let (rec, gt) = synthesize_with(&params).unwrap();
        let x = &rec.measurement_lead().samples;
        let fid = delineate(x, 500.0, &gt.r_peaks());
        assert!(fid.iter().all(|b| b.p_onset.is_none() && b.p_peak.is_none()));
        assert!(fid.iter().all(|b| b.t_offset.is_some()));
    }

    #[test]
    fn empty_peaks_give_empty_fiducials() {
        assert!(delineate(&[0.0; 1000], 500.0, &[]).is_empty());
    }

    #[test]
    fn output_is_always_ordered() {
        for hr in [40.0, 90.0, 150.0, 200.0] {
            let (rec, _) = synthesize_ecg(hr, 10.0, 250.0, 0.08, 5).unwrap();
            let x = &rec.measurement_lead().samples;
            let fid = delineate(x, 250.0, &detect_r_peaks(x, 250.0).unwrap());
            assert!(fid.iter().all(BeatFiducials::is_ordered));
        }
    }
}
