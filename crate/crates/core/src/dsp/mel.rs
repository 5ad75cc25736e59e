//! Triangular mel filterbank on the `m = 2595·log10(1 + f/700)` scale.
//! Triangles peak at 1 (no area normalization).

use super::{DspError, LinearSpectrogram, MelConfig, MelSpectrogram};

/// Lower bound applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-7;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `[mel_bins × spectrum_bins]`.
    weights: Vec<f64>,
    mel_bins: usize,
    spectrum_bins: usize,
}

impl MelFilterbank {
    pub fn new(config: &MelConfig) -> Result<Self, DspError> {
        config.validate()?;
        let n_mels = config.mel_bins;
        let n_bins = config.spectrum_bins();
        let (lo, hi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = config.target_rate as f64 / config.fft_size as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let rising = (f - left) / (centre - left);
                let falling = (right - f) / (right - centre);
                weights[m * n_bins + k] = rising.min(falling).max(0.0);
            }
        }
        Ok(Self {
            weights,
            mel_bins: n_mels,
            spectrum_bins: n_bins,
        })
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        &self.weights[m * self.spectrum_bins..(m + 1) * self.spectrum_bins]
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn apply(&self, spectrum: &[f64], out: &mut Vec<f64>) {
        for m in 0..self.mel_bins {
            let e: f64 = self.filter(m).iter().zip(spectrum).map(|(w, s)| w * s).sum();
            out.push(e);
        }
    }
}

/// `ln(max(M·row, ε))` for every frame.
pub fn mel_project_log(spec: &LinearSpectrogram, config: &MelConfig) -> Result<MelSpectrogram, DspError> {
    if spec.bins != config.spectrum_bins() {
        return Err(DspError::ShapeMismatch {
            expected: config.spectrum_bins(),
            actual: spec.bins,
        });
    }
    let bank = MelFilterbank::new(config)?;
    let mut values = Vec::with_capacity(spec.frames * config.mel_bins);
    for t in 0..spec.frames {
        bank.apply(spec.frame(t), &mut values);
    }
    values.iter_mut().for_each(|v| *v = v.max(LOG_FLOOR).ln());
    MelSpectrogram::from_values(values, spec.frames, *config)
}
