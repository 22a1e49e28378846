//! FFT band-stop used to attach a frequency band to an explanation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Octave bands from 0.5 Hz up to the Nyquist frequency.
pub fn octave_bands(fs: f64) -> Vec<(f64, f64)> {
    let nyquist = fs / 2.0;
    let mut bands = Vec::new();
    let mut lo = 0.5;
    while lo < nyquist {
        bands.push((lo, (2.0 * lo).min(nyquist)));
        lo *= 2.0;
    }
    bands
}

/// Removes the `[lo, hi)` Hz band from `x` by zeroing FFT bins.
pub fn band_stop(x: &[f64], fs: f64, (lo, hi): (f64, f64)) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * fs / n as f64;
        if f >= lo && f < hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}
