//! Sum-of-Gaussians ECG synthesis with exact landmark oracles.
//!
//! Every beat is built from a handful of Gaussian waves placed relative to
//! the R peak. Landmarks follow fixed conventions on those waves so the
//! delineator has an analytic target:
//!
//! * wave peaks are Gaussian centres;
//! * P onset is `centre - 2σ` of the P wave, T offset is `centre + 2σ` of the
//!   T wave (where the tangent at the inflection point meets the baseline);
//! * QRS onset/offset are `centre - 2σ` of the first and `centre + 2σ` of the
//!   last QRS wave.
//!
//! PR, QT and the P/T widths scale with `sqrt(RR)` (clamped) so that beats
//! still fit at high rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EcgRecord, Lead, LeadConfig, Result, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    /// Offset from the R peak in milliseconds.
    pub center_ms: f64,
    pub sigma_ms: f64,
    pub amplitude_mv: f64,
}

impl Wave {
    fn new(center_ms: f64, sigma_ms: f64, amplitude_mv: f64) -> Self {
        Wave {
            center_ms,
            sigma_ms,
            amplitude_mv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatKind {
    Normal,
    /// Premature atrial contraction: early, narrow, with a P wave; resets the sinus node.
    Atrial,
    /// Premature ventricular contraction: early, wide, no P wave, discordant T,
    /// followed by a full compensatory pause.
    Ventricular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrematureBeat {
    /// Index of the beat (in the sinus schedule) that fires early.
    pub beat_index: usize,
    pub kind: BeatKind,
    /// Coupling interval as a fraction of the nominal RR.
    pub coupling: f64,
}

/// Sample indices of one beat's landmarks. `r_peak` is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BeatFiducials {
    pub p_onset: Option<usize>,
    pub p_peak: Option<usize>,
    pub qrs_onset: Option<usize>,
    pub r_peak: usize,
    pub qrs_offset: Option<usize>,
    pub t_peak: Option<usize>,
    pub t_offset: Option<usize>,
}

impl BeatFiducials {
    /// Present landmarks in temporal order.
    pub fn present(&self) -> Vec<usize> {
        [
            self.p_onset,
            self.p_peak,
            self.qrs_onset,
            Some(self.r_peak),
            self.qrs_offset,
            self.t_peak,
            self.t_offset,
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn is_ordered(&self) -> bool {
        self.present().windows(2).all(|w| w[0] < w[1])
    }
}

/// Landmarks of every synthesised beat, plus the beat kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthFiducials {
    pub beats: Vec<BeatFiducials>,
    pub kinds: Vec<BeatKind>,
    pub sampling_rate_hz: f64,
}

impl GroundTruthFiducials {
    pub fn r_peaks(&self) -> Vec<usize> {
        self.beats.iter().map(|b| b.r_peak).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.beats.iter().all(BeatFiducials::is_ordered)
            && self.beats.windows(2).all(|w| w[0].r_peak < w[1].r_peak)
    }

    /// Time span `[first landmark, last landmark]` of beat `i` in seconds.
    pub fn beat_span_s(&self, i: usize) -> (f64, f64) {
        let present = self.beats[i].present();
        (
            present[0] as f64 / self.sampling_rate_hz,
            present[present.len() - 1] as f64 / self.sampling_rate_hz,
        )
    }

    /// Spans of all beats of a given kind.
    pub fn spans_of(&self, kind: BeatKind) -> Vec<(f64, f64)> {
        (0..self.beats.len())
            .filter(|&i| self.kinds[i] == kind)
            .map(|i| self.beat_span_s(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub heart_rate_bpm: f64,
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
    pub noise_amplitude_mv: f64,
    pub seed: u64,
    pub lead_config: LeadConfig,
    pub p_wave: bool,
    /// Added ST-segment level in mV (negative values depress the segment).
    pub st_offset_mv: f64,
    /// Standard deviation of beat-to-beat RR variation, as a fraction of RR.
    pub rr_jitter: f64,
    pub premature: Vec<PrematureBeat>,
    pub amplitude_scale: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            heart_rate_bpm: 60.0,
            duration_s: 10.0,
            sampling_rate_hz: 500.0,
            noise_amplitude_mv: 0.0,
            seed: 0,
            lead_config: LeadConfig::LeadII,
            p_wave: true,
            st_offset_mv: 0.0,
            rr_jitter: 0.0,
            premature: Vec::new(),
            amplitude_scale: 1.0,
        }
    }
}

impl SynthParams {
    pub fn new(heart_rate_bpm: f64, duration_s: f64, sampling_rate_hz: f64, noise_amplitude_mv: f64, seed: u64) -> Self {
        SynthParams {
            heart_rate_bpm,
            duration_s,
            sampling_rate_hz,
            noise_amplitude_mv,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |name: &'static str, value: f64, ok: bool, range: &'static str| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(SignalError::OutOfRange { name, value, range })
            }
        };
        let hr = self.heart_rate_bpm;
        check("heart_rate_bpm", hr, (20.0..=250.0).contains(&hr), "[20, 250]")?;
        check("duration_s", self.duration_s, self.duration_s >= 2.0, "[2, inf)")?;
        check(
            "sampling_rate_hz",
            self.sampling_rate_hz,
            self.sampling_rate_hz >= 50.0,
            "[50, inf)",
        )?;
        check(
            "noise_amplitude_mv",
            self.noise_amplitude_mv,
            self.noise_amplitude_mv >= 0.0,
            "[0, inf)",
        )?;
        check("rr_jitter", self.rr_jitter, (0.0..0.5).contains(&self.rr_jitter), "[0, 0.5)")?;
        check(
            "amplitude_scale",
            self.amplitude_scale,
            self.amplitude_scale > 0.0,
            "(0, inf)",
        )?;
        for p in &self.premature {
            check("coupling", p.coupling, (0.3..1.0).contains(&p.coupling), "[0.3, 1)")?;
        }
        Ok(())
    }
}

/// A beat template in milliseconds relative to its R peak.
struct Template {
    p: Option<Wave>,
    qrs: Vec<Wave>,
    extra: Vec<Wave>,
    t: Wave,
    p_onset_ms: Option<f64>,
    qrs_onset_ms: f64,
    qrs_offset_ms: f64,
    t_offset_ms: f64,
}

impl Template {
    fn build(kind: BeatKind, rr_s: f64, params: &SynthParams) -> Template {
        let s = rr_s.sqrt().clamp(0.55, 1.25);
        match kind {
            BeatKind::Normal | BeatKind::Atrial => {
                let qrs = vec![
                    Wave::new(-28.0, 7.0, -0.12),
                    Wave::new(0.0, 9.0, 1.0),
                    Wave::new(28.0, 7.0, -0.25),
                ];
                let qrs_onset_ms = -42.0;
                let qrs_offset_ms = 42.0;
                let (pr, p_amp) = if kind == BeatKind::Atrial { (120.0, 0.10) } else { (150.0, 0.15) };
                let (p, p_onset_ms) = if params.p_wave || kind == BeatKind::Atrial {
                    let sigma = 22.0 * s;
                    let onset = qrs_onset_ms - pr * s;
                    (Some(Wave::new(onset + 2.0 * sigma, sigma, p_amp)), Some(onset))
                } else {
                    (None, None)
                };
                let t_sigma = 45.0 * s;
                let t_offset_ms = qrs_onset_ms + 400.0 * s;
                let t = Wave::new(t_offset_ms - 2.0 * t_sigma, t_sigma, 0.35);
                let mut extra = Vec::new();
                if params.st_offset_mv != 0.0 {
                    extra.push(Wave::new(qrs_offset_ms + 70.0 * s, 35.0 * s, params.st_offset_mv));
                }
                Template {
                    p,
                    qrs,
                    extra,
                    t,
                    p_onset_ms,
                    qrs_onset_ms,
                    qrs_offset_ms,
                    t_offset_ms,
                }
            }
            BeatKind::Ventricular => {
                let qrs = vec![Wave::new(0.0, 22.0, 1.2), Wave::new(60.0, 18.0, -0.4)];
                let qrs_onset_ms = -44.0;
                let qrs_offset_ms = 96.0;
                let t_sigma = 50.0;
                let t_offset_ms = qrs_offset_ms + 260.0;
                Template {
                    p: None,
                    qrs,
                    extra: Vec::new(),
                    t: Wave::new(t_offset_ms - 2.0 * t_sigma, t_sigma, -0.45),
                    p_onset_ms: None,
                    qrs_onset_ms,
                    qrs_offset_ms,
                    t_offset_ms,
                }
            }
        }
    }

    fn waves(&self) -> impl Iterator<Item = &Wave> {
        self.p.iter().chain(&self.qrs).chain(&self.extra).chain(std::iter::once(&self.t))
    }

    fn first_ms(&self) -> f64 {
        self.p_onset_ms.unwrap_or(self.qrs_onset_ms)
    }
}

fn lead_gain(name: &str) -> f64 {
    match name {
        "I" => 0.6,
        "II" => 1.0,
        "III" => 0.4,
        "aVR" => -0.8,
        "aVL" => 0.15,
        "aVF" => 0.7,
        "V1" => -0.5,
        "V2" => 0.3,
        "V3" => 0.8,
        "V4" => 1.2,
        "V5" => 1.0,
        "V6" => 0.8,
        _ => 1.0,
    }
}

/// Synthesises a lead II record with default morphology.
pub fn synthesize_ecg(
    heart_rate_bpm: f64,
    duration_s: f64,
    sampling_rate_hz: f64,
    noise_amplitude_mv: f64,
    seed: u64,
) -> Result<(EcgRecord, GroundTruthFiducials)> {
    synthesize_with(&SynthParams::new(
        heart_rate_bpm,
        duration_s,
        sampling_rate_hz,
        noise_amplitude_mv,
        seed,
    ))
}

pub fn synthesize_with(params: &SynthParams) -> Result<(EcgRecord, GroundTruthFiducials)> {
    params.validate()?;
    let fs = params.sampling_rate_hz;
    let n = (params.duration_s * fs).round() as usize;
    let last_t = (n - 1) as f64 / fs;
    let rr = 60.0 / params.heart_rate_bpm;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // Sinus schedule, with optional jitter, then premature beats.
    let mut times = Vec::new();
    let mut t = rr / 2.0;
    let jitter = Normal::new(0.0, params.rr_jitter.max(0.0)).expect("finite jitter");
    while t < params.duration_s + rr {
        times.push(t);
        let factor = if params.rr_jitter > 0.0 {
            (1.0 + jitter.sample(&mut rng)).clamp(0.6, 1.4)
        } else {
            1.0
        };
        t += rr * factor;
    }
    let mut kinds = vec![BeatKind::Normal; times.len()];
    let mut premature = params.premature.clone();
    premature.sort_by_key(|p| p.beat_index);
    for p in &premature {
        let k = p.beat_index;
        if k == 0 || k >= times.len() {
            continue;
        }
        let early = times[k - 1] + p.coupling * rr;
        times[k] = early;
        kinds[k] = p.kind;
        if p.kind == BeatKind::Atrial {
            // Sinus node reset: the next beat follows one full RR after the PAC.
            for j in k + 1..times.len() {
                times[j] = early + (j - k) as f64 * rr;
            }
        }
    }

    let to_index = |ms: f64, r: f64| ((r + ms / 1000.0) * fs).round() as usize;
    let mut beats = Vec::new();
    let mut beat_kinds = Vec::new();
    let mut templates = Vec::new();
    for (&r, &kind) in times.iter().zip(&kinds) {
        let tpl = Template::build(kind, rr, params);
        let first = r + tpl.first_ms() / 1000.0;
        let last = r + tpl.t_offset_ms / 1000.0;
        if first < 0.0 || last > last_t {
            continue;
        }
        let fid = BeatFiducials {
            p_onset: tpl.p_onset_ms.map(|ms| to_index(ms, r)),
            p_peak: tpl.p.map(|w| to_index(w.center_ms, r)),
            qrs_onset: Some(to_index(tpl.qrs_onset_ms, r)),
            r_peak: (r * fs).round() as usize,
            qrs_offset: Some(to_index(tpl.qrs_offset_ms, r)),
            t_peak: Some(to_index(tpl.t.center_ms, r)),
            t_offset: Some(to_index(tpl.t_offset_ms, r)),
        };
        debug_assert!(fid.is_ordered());
        beats.push(fid);
        beat_kinds.push(kind);
        templates.push((r, tpl));
    }

    let mut base = vec![0.0; n];
    for (r, tpl) in &templates {
        for w in tpl.waves() {
            let centre = r + w.center_ms / 1000.0;
            let sigma = w.sigma_ms / 1000.0;
            let lo = ((centre - 6.0 * sigma) * fs).floor().max(0.0) as usize;
            let hi = (((centre + 6.0 * sigma) * fs).ceil() as usize).min(n - 1);
            for (i, v) in base.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let dt = i as f64 / fs - centre;
                *v += w.amplitude_mv * (-(dt * dt) / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    let noise = Normal::new(0.0, params.noise_amplitude_mv).expect("finite noise");
    let leads: Vec<Lead> = params
        .lead_config
        .lead_names()
        .iter()
        .map(|name| {
            let gain = lead_gain(name) * params.amplitude_scale;
            let samples = base
                .iter()
                .map(|&v| {
                    let e = if params.noise_amplitude_mv > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    v * gain + e
                })
                .collect();
            Lead {
                name: name.to_string(),
                samples,
            }
        })
        .collect();

    let id = format!(
        "synth-hr{}-fs{}-seed{}",
        params.heart_rate_bpm, params.sampling_rate_hz, params.seed
    );
    let record = EcgRecord::new(id, fs, leads)?;
    Ok((
        record,
        GroundTruthFiducials {
            beats,
            kinds: beat_kinds,
            sampling_rate_hz: fs,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sixty_bpm_gives_ten_beats_500_apart() {
        let (rec, gt) = synthesize_ecg(60.0, 10.0, 500.0, 0.0, 0).unwrap();
        assert_eq!(rec.len(), 5000);
        let r = gt.r_peaks();
        assert_eq!(r.len(), 10);
        assert!(r.windows(2).all(|w| w[1] - w[0] == 500));
    }

    #[test]
    fn seventy_two_bpm_gives_twelve_beats() {
        // Independent count: R_k = RR/2 + k*RR; the beat spans [R - 192 ms*s', R + QT'] where
        // at 72 bpm s = sqrt(0.8333) = 0.9129, PR' = 136.9 ms, QT' = 365.1 ms.
        let rr = 60.0 / 72.0;
        let s = f64::sqrt(rr);
        let pre = (42.0 + 150.0 * s) / 1000.0;
        let post = (-42.0 + 400.0 * s) / 1000.0;
        let expected = (0..100)
            .map(|k| rr / 2.0 + k as f64 * rr)
            .filter(|&r| r - pre >= 0.0 && r + post <= 4999.0 / 500.0)
            .count();
        assert_eq!(expected, 12);
        let (_, gt) = synthesize_ecg(72.0, 10.0, 500.0, 0.0, 0).unwrap();
        assert_eq!(gt.beats.len(), expected);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize_ecg(80.0, 5.0, 500.0, 0.05, 9).unwrap();
        let b = synthesize_ecg(80.0, 5.0, 500.0, 0.05, 9).unwrap();
        assert_eq!(a, b);
        let c = synthesize_ecg(80.0, 5.0, 500.0, 0.05, 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn out_of_range_parameters() {
        assert!(synthesize_ecg(19.0, 10.0, 500.0, 0.0, 0).is_err());
        assert!(synthesize_ecg(251.0, 10.0, 500.0, 0.0, 0).is_err());
        assert!(synthesize_ecg(60.0, 1.5, 500.0, 0.0, 0).is_err());
        assert!(synthesize_ecg(60.0, 10.0, 500.0, -1.0, 0).is_err());
    }

    #[test]
    fn no_p_wave_template() {
        let params = SynthParams { p_wave: false, ..SynthParams::new(70.0, 10.0, 500.0, 0.0, 1) };
        let (_, gt) = synthesize_with(&params).unwrap();
        assert!(gt.beats.iter().all(|b| b.p_onset.is_none() && b.p_peak.is_none()));
    }

    #[test]
    fn premature_ventricular_beat_is_marked() {
        let params = SynthParams {
            premature: vec![PrematureBeat { beat_index: 4, kind: BeatKind::Ventricular, coupling: 0.65 }],
            ..SynthParams::new(60.0, 10.0, 500.0, 0.0, 1)
        };
        let (_, gt) = synthesize_with(&params).unwrap();
        assert_eq!(gt.kinds.iter().filter(|k| **k == BeatKind::Ventricular).count(), 1);
        let r = gt.r_peaks();
        // 3.5 s + 0.65 s, then the compensatory pause returns to 5.5 s.
        assert_eq!(r[4], 2075);
        assert_eq!(r[5], 2750);
        assert!(gt.is_valid());
    }

    #[test]
    fn twelve_lead_synthesis() {
        let params = SynthParams { lead_config: LeadConfig::TwelveLead, ..SynthParams::new(75.0, 10.0, 500.0, 0.0, 2) };
        let (rec, _) = synthesize_with(&params).unwrap();
        assert_eq!(rec.lead_config(), LeadConfig::TwelveLead);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn fiducials_always_ordered(hr in 20.0f64..250.0, seed in any::<u64>(), fs in prop::sample::select(vec![100.0, 250.0, 500.0, 1000.0]),
                                    p in any::<bool>(), jitter in 0.0f64..0.2) {
            let params = SynthParams { p_wave: p, rr_jitter: jitter, ..SynthParams::new(hr, 10.0, fs, 0.02, seed) };
            let (rec, gt) = synthesize_with(&params).unwrap();
            prop_assert!(gt.is_valid());
            prop_assert!(gt.beats.iter().all(|b| b.present().iter().all(|&i| i < rec.len())));
        }
    }
}
