use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, DspError, MelConfig};

/// `[frames × (fft_size/2 + 1)]` magnitudes, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl LinearSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

/// Periodic Hann window (the DFT-even form).
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Frame `t` covers samples `[t·hop, t·hop + fft_size)`, zero-padded past
/// the end; `floor(N / hop)` frames in total.
pub fn stft_magnitude(clip: &AudioClip, config: &MelConfig) -> Result<LinearSpectrogram, DspError> {
    config.validate()?;
    if clip.channel_count != 1 {
        return Err(DspError::InvalidClip(format!("{} channels, expected mono", clip.channel_count)));
    }
    let n = clip.samples.len();
    if n < config.fft_size {
        return Err(DspError::TooShort {
            samples: n,
            fft_size: config.fft_size,
        });
    }
    let frames = config.frame_count(n);
    let bins = config.spectrum_bins();
    let window = hann_window(config.fft_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); config.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = t * config.hop_size;
        for (i, slot) in buf.iter_mut().enumerate() {
            let s = clip.samples.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex::new(s * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Ok(LinearSpectrogram { frames, bins, values })
}
