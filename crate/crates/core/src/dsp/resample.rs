//! 44.1 kHz → 22.05 kHz: linear-phase Kaiser-windowed-sinc low-pass,
//! evaluated only at the even output positions.

use std::f64::consts::PI;
use std::sync::OnceLock;

pub const DECIMATOR_TAPS: usize = 255;
/// −6 dB point of the low-pass at the 44.1 kHz input rate.
pub const DECIMATOR_CUTOFF_HZ: f64 = 10_590.0;
const INPUT_RATE: f64 = 44_100.0;
/// Kaiser β for roughly 80 dB of stopband rejection.
const KAISER_BETA: f64 = 7.857;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn design() -> Vec<f64> {
    let n = DECIMATOR_TAPS;
    let mid = (n - 1) as f64 / 2.0;
    let fc = DECIMATOR_CUTOFF_HZ / INPUT_RATE;
    let norm = bessel_i0(KAISER_BETA);
    let mut taps: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 - mid;
            let sinc = if t == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * t).sin() / (PI * t) };
            let r = t / mid;
            sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= dc);
    taps
}

/// The decimator's impulse response (unit DC gain, symmetric).
pub fn halfband_taps() -> &'static [f64] {
    static TAPS: OnceLock<Vec<f64>> = OnceLock::new();
    TAPS.get_or_init(design)
}

/// Low-pass and keep every second sample; `floor(N/2)` outputs, aligned
/// with the input (the filter's group delay is compensated).
pub fn decimate_by_two(x: &[f64]) -> Vec<f64> {
    let taps = halfband_taps();
    let half = (taps.len() - 1) / 2;
    let n = x.len();
    (0..n / 2)
        .map(|m| {
            // y[m] = Σ_k h[k]·x[2m + half − k]
            let centre = 2 * m + half;
            let k_lo = centre.saturating_sub(n - 1);
            let k_hi = taps.len().min(centre + 1);
            (k_lo..k_hi).map(|k| taps[k] * x[centre - k]).sum()
        })
        .collect()
}
