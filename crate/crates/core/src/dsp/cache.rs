//! Mel-spectrogram cache files:
//!
//! ```text
//! "MELS" u32 version, u32 frames, u32 bins,
//! u32 fft_size, u32 hop_size, u32 target_rate, f64 fmin, f64 fmax,
//! f32 × frames·bins (row-major)
//! ```
//! all little-endian.

use std::path::Path;

use super::{DspError, MelConfig, MelSpectrogram};

pub const MEL_CACHE_MAGIC: &[u8; 4] = b"MELS";
pub const MEL_CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 6 + 16;

pub fn write_mel_cache(mel: &MelSpectrogram) -> Vec<u8> {
    let c = &mel.config;
    let mut buf = Vec::with_capacity(HEADER_LEN + mel.values().len() * 4);
    buf.extend_from_slice(MEL_CACHE_MAGIC);
    for v in [
        MEL_CACHE_VERSION,
        mel.frame_count() as u32,
        mel.bins() as u32,
        c.fft_size as u32,
        c.hop_size as u32,
        c.target_rate,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&c.fmin.to_le_bytes());
    buf.extend_from_slice(&c.fmax.to_le_bytes());
    for &v in mel.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn read_mel_cache(bytes: &[u8]) -> Result<MelSpectrogram, DspError> {
    let err = |m: &str| DspError::Cache(m.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(err("truncated header"));
    }
    if &bytes[..4] != MEL_CACHE_MAGIC {
        return Err(err("bad magic"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    if u32_at(0) != MEL_CACHE_VERSION {
        return Err(DspError::Cache(format!("unsupported version {}", u32_at(0))));
    }
    let frames = u32_at(1) as usize;
    let bins = u32_at(2) as usize;
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
    let config = MelConfig {
        fft_size: u32_at(3) as usize,
        hop_size: u32_at(4) as usize,
        mel_bins: bins,
        target_rate: u32_at(5),
        fmin: f64_at(28),
        fmax: f64_at(36),
    };
    let body = &bytes[HEADER_LEN..];
    if body.len() != frames * bins * 4 {
        return Err(err("payload length does not match header"));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    MelSpectrogram::from_values(values, frames, config)
}

pub fn save_mel_cache(mel: &MelSpectrogram, path: impl AsRef<Path>) -> Result<(), DspError> {
    let path = path.as_ref();
    std::fs::write(path, write_mel_cache(mel)).map_err(|source| DspError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_mel_cache(path: impl AsRef<Path>) -> Result<MelSpectrogram, DspError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DspError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_mel_cache(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_and_round_trip() {
        let config = MelConfig::default();
        let values: Vec<f64> = (0..3 * 128).map(|i| (i as f32 * 0.25 - 7.0) as f64).collect();
        let mel = MelSpectrogram::from_values(values, 3, config).unwrap();
        let bytes = write_mel_cache(&mel);
        assert_eq!(&bytes[..4], b"MELS");
        assert_eq!(bytes.len(), HEADER_LEN + 3 * 128 * 4);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(read_mel_cache(&bytes).unwrap(), mel);
    }

    #[test]
    fn rejects_bad_input() {
        let mel = MelSpectrogram::from_values(vec![0.0; 128], 1, MelConfig::default()).unwrap();
        let mut bytes = write_mel_cache(&mel);
        assert!(read_mel_cache(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(read_mel_cache(&bytes).is_err());
    }
}
