use std::path::Path;

use super::{AudioClip, DspError};

fn classify(path: &Path, err: hound::Error) -> DspError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => DspError::MissingFile(path.to_path_buf()),
        // hound reports short reads as `Other`.
        hound::Error::IoError(e)
            if matches!(
                e.kind(),
                std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::InvalidData | std::io::ErrorKind::Other
            ) =>
        {
            DspError::MalformedHeader {
                path: path.to_path_buf(),
                reason: e.to_string(),
            }
        }
        hound::Error::IoError(source) => DspError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::FormatError(reason) => DspError::MalformedHeader {
            path: path.to_path_buf(),
            reason: reason.into(),
        },
        hound::Error::Unsupported => DspError::UnsupportedCodec {
            path: path.to_path_buf(),
            reason: "encoding not supported".into(),
        },
        other => DspError::UnsupportedCodec {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Decodes integer PCM (8/16/24-bit) or 32-bit float WAV with one or two
/// channels. Integer samples are divided by `2^(bits-1)`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, DspError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DspError::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let unsupported = |reason: String| DspError::UnsupportedCodec {
        path: path.to_path_buf(),
        reason,
    };
    if !(1..=2).contains(&spec.channels) {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| classify(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (fmt, bits) => return Err(unsupported(format!("{bits}-bit {fmt:?}"))),
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(unsupported("non-finite float samples".into()));
    }
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
        channel_count: spec.channels as usize,
    })
}

/// Writes a clip as 16-bit PCM, clipping to full scale.
pub fn write_wav_i16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), DspError> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: clip.channel_count as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(source) => DspError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => classify(path, other),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(io)?;
    }
    w.finalize().map_err(io)
}
