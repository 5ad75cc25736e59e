//! Audio front end: WAV → mono 22.05 kHz → peak-normalized → |STFT| →
//! 128-band mel → natural log.

mod cache;
mod mel;
mod resample;
mod stft;
mod wav;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_mel_cache, write_mel_cache, load_mel_cache, save_mel_cache, MEL_CACHE_MAGIC, MEL_CACHE_VERSION};
pub use mel::{hz_to_mel, mel_project_log, mel_to_hz, MelFilterbank, LOG_FLOOR};
pub use resample::{decimate_by_two, halfband_taps, DECIMATOR_CUTOFF_HZ, DECIMATOR_TAPS};
pub use stft::{hann_window, stft_magnitude, LinearSpectrogram};
pub use wav::{load_wav, write_wav_i16};

pub const TARGET_RATE: u32 = 22_050;
pub const SOURCE_RATE: u32 = 44_100;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed RIFF/WAVE header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported audio encoding in {path}: {reason}")]
    UnsupportedCodec { path: PathBuf, reason: String },
    #[error("unsupported sample rate {0} Hz (expected 44100 or 22050)")]
    UnsupportedSampleRate(u32),
    #[error("clip of {samples} samples is shorter than one {fft_size}-sample FFT window")]
    TooShort { samples: usize, fft_size: usize },
    #[error("spectrogram has {actual} bins, expected {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid mel configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("mel cache: {0}")]
    Cache(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Interleaved PCM samples scaled to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channel_count: usize,
}

impl AudioClip {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            channel_count: 1,
        }
    }

    /// Samples per channel.
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channel_count.max(1)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.iter().skip(c).step_by(self.channel_count).copied().collect()
    }

    fn validate(&self) -> Result<(), DspError> {
        if self.channel_count == 0 || !self.samples.len().is_multiple_of(self.channel_count) {
            return Err(DspError::InvalidClip(format!(
                "{} samples do not split into {} channels",
                self.samples.len(),
                self.channel_count
            )));
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(DspError::InvalidClip("non-finite sample".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    pub mel_bins: usize,
    pub target_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop_size: 512,
            mel_bins: 128,
            target_rate: TARGET_RATE,
            fmin: 0.0,
            fmax: TARGET_RATE as f64 / 2.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let nyquist = self.target_rate as f64 / 2.0;
        let bad = |m: &str| Err(DspError::InvalidConfig(m.to_string()));
        if self.fft_size < 2 || self.hop_size == 0 || self.hop_size > self.fft_size {
            return bad("need 0 < hop_size <= fft_size");
        }
        if self.mel_bins == 0 {
            return bad("mel_bins must be at least 1");
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return bad("need 0 <= fmin < fmax <= target_rate/2");
        }
        Ok(())
    }

    pub fn spectrum_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced for `samples` samples: `floor(samples / hop)`.
    pub fn frame_count(&self, samples: usize) -> usize {
        samples / self.hop_size
    }

    /// Frames covering `seconds` of audio at the target rate.
    pub fn frames_for_seconds(&self, seconds: f64) -> usize {
        self.frame_count((seconds * self.target_rate as f64).round() as usize)
    }
}

/// `[frames × mel_bins]` natural-log mel magnitudes, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f64>,
    frame_count: usize,
    pub config: MelConfig,
}

impl MelSpectrogram {
    pub fn from_values(values: Vec<f64>, frame_count: usize, config: MelConfig) -> Result<Self, DspError> {
        if values.len() != frame_count * config.mel_bins {
            return Err(DspError::ShapeMismatch {
                expected: frame_count * config.mel_bins,
                actual: values.len(),
            });
        }
        Ok(Self {
            values,
            frame_count,
            config,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn bins(&self) -> usize {
        self.config.mel_bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let b = self.bins();
        &self.values[t * b..(t + 1) * b]
    }

    /// Frames `[start, start + len)` as a new spectrogram.
    pub fn slice_frames(&self, start: usize, len: usize) -> MelSpectrogram {
        let b = self.bins();
        MelSpectrogram {
            values: self.values[start * b..(start + len) * b].to_vec(),
            frame_count: len,
            config: self.config,
        }
    }
}

/// Mono downmix, resampling to 22.05 kHz and peak normalization.
pub fn prepare_waveform(clip: &AudioClip) -> Result<AudioClip, DspError> {
    clip.validate()?;
    let n = clip.frames();
    let c = clip.channel_count;
    let mono: Vec<f64> = if c == 1 {
        clip.samples.clone()
    } else {
        clip.samples
            .chunks_exact(c)
            .map(|f| f.iter().sum::<f64>() / c as f64)
            .collect()
    };
    debug_assert_eq!(mono.len(), n);
    let mut samples = match clip.sample_rate {
        SOURCE_RATE => decimate_by_two(&mono),
        TARGET_RATE => mono,
        other => return Err(DspError::UnsupportedSampleRate(other)),
    };
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(AudioClip::mono(samples, TARGET_RATE))
}

/// Full chain on an in-memory clip.
pub fn preprocess_clip(clip: &AudioClip, config: &MelConfig) -> Result<MelSpectrogram, DspError> {
    config.validate()?;
    if config.target_rate != TARGET_RATE {
        return Err(DspError::InvalidConfig(format!(
            "target rate must be {TARGET_RATE} Hz"
        )));
    }
    let prepared = prepare_waveform(clip)?;
    let spec = stft_magnitude(&prepared, config)?;
    mel_project_log(&spec, config)
}

/// `load_wav → prepare_waveform → stft_magnitude → mel_project_log`.
pub fn preprocess(path: impl AsRef<Path>, config: &MelConfig) -> Result<MelSpectrogram, DspError> {
    preprocess_clip(&load_wav(path)?, config)
}

#[cfg(test)]
mod tests;
