//! Small zero-phase filtering toolkit used by the detector and delineator.

use std::f64::consts::PI;

/// Direct-form I biquad with RBJ cookbook coefficients.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    pub fn lowpass(cutoff_hz: f64, fs: f64) -> Self {
        let (cos_w, alpha) = Self::prewarp(cutoff_hz, fs);
        let b1 = 1.0 - cos_w;
        Self::normalized([b1 / 2.0, b1, b1 / 2.0], [1.0 + alpha, -2.0 * cos_w, 1.0 - alpha])
    }

    pub fn highpass(cutoff_hz: f64, fs: f64) -> Self {
        let (cos_w, alpha) = Self::prewarp(cutoff_hz, fs);
        let b1 = 1.0 + cos_w;
        Self::normalized([b1 / 2.0, -b1, b1 / 2.0], [1.0 + alpha, -2.0 * cos_w, 1.0 - alpha])
    }

    fn prewarp(cutoff_hz: f64, fs: f64) -> (f64, f64) {
        let w = 2.0 * PI * cutoff_hz / fs;
        (w.cos(), w.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2))
    }

    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Biquad {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Causal pass from zero initial state.
    pub fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }

    /// Forward then backward pass: zero phase, squared magnitude response.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.run(x);
        y.reverse();
        let mut z = self.run(&y);
        z.reverse();
        z
    }
}

/// 5-15 Hz band-pass of the detector front end, applied to `x - x[0]`.
pub fn bandpass_qrs(x: &[f64], fs: f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let x0 = x[0];
    let centred: Vec<f64> = x.iter().map(|v| v - x0).collect();
    let hp = Biquad::highpass(5.0, fs).filtfilt(&centred);
    let high = 15.0f64.min(0.45 * fs);
    Biquad::lowpass(high, fs).filtfilt(&hp)
}

/// Centred moving average; the window shrinks at the edges. Each output is
/// summed directly so that a shifted input yields an exactly shifted output.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Centred five-point derivative in units per sample (zero at the edges).
pub fn derivative5(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        d[i] = (2.0 * x[i + 1] + x[i + 2] - x[i - 2] - 2.0 * x[i - 1]) / 8.0;
    }
    d
}

/// Central difference in units per sample.
pub fn gradient(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut d = vec![0.0; n];
    d[0] = x[1] - x[0];
    d[n - 1] = x[n - 1] - x[n - 2];
    for i in 1..n - 1 {
        d[i] = (x[i + 1] - x[i - 1]) / 2.0;
    }
    d
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

pub fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round().max(0.0) as usize
}
