//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rustfft::{num_complex::Complex, FftPlanner};

/// Welch PSD with a Hann window and 50% overlap. Returns (freq, power).
pub fn welch_psd(x: &[f64], sample_rate: f64, seg: usize) -> Vec<(f64, f64)> {
    let hop = seg / 2;
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / seg as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let mean = x[start..start + seg].iter().sum::<f64>() / seg as f64;
        let mut buf: Vec<Complex<f64>> = x[start..start + seg]
            .iter()
            .zip(&window)
            .map(|(s, w)| Complex::new((s - mean) * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    acc.iter()
        .enumerate()
        .map(|(k, p)| (k as f64 * sample_rate / seg as f64, p / count as f64))
        .collect()
}

/// Least-squares slope of log10(power) against log10(freq) over `[lo, hi]`.
pub fn loglog_slope(psd: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = psd
        .iter()
        .filter(|(f, p)| *f >= lo && *f <= hi && *p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// HRV range recomputed from scratch: every RR interval is converted to a
/// rate and the window is scanned linearly.
pub fn brute_force_range(beats: &[f64], t: f64, window: f64) -> Option<f64> {
    let rates: Vec<f64> = beats
        .windows(2)
        .filter(|w| w[1] > t - window && w[1] <= t)
        .map(|w| 60.0 / (w[1] - w[0]))
        .collect();
    if rates.len() < 2 {
        return None;
    }
    let mx = rates.iter().cloned().fold(f64::MIN, f64::max);
    let mn = rates.iter().cloned().fold(f64::MAX, f64::min);
    Some(mx - mn)
}
