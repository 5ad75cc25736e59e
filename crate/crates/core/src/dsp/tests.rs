use std::f64::consts::PI;

use proptest::prelude::*;
use tempfile::tempdir;

use super::*;

fn sine(freq: f64, rate: u32, seconds: f64, amp: f64) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

fn write_raw_i16(path: &std::path::Path, channels: u16, rate: u32, samples: &[i16]) {
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn full_scale_sixteen_bit_sample_decodes_exactly() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("fs.wav");
    write_raw_i16(&path, 1, 44_100, &[32_767, -32_768, 0]);
    let clip = load_wav(&path).unwrap();
    assert_eq!(clip.samples, vec![32_767.0 / 32_768.0, -1.0, 0.0]);
}

#[test]
fn three_second_stereo_clip_keeps_its_layout() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("stereo.wav");
    write_raw_i16(&path, 2, 44_100, &vec![100; 2 * 132_300]);
    let clip = load_wav(&path).unwrap();
    assert_eq!(clip.channel_count, 2);
    assert_eq!(clip.sample_rate, 44_100);
    assert_eq!(clip.frames(), 132_300);
}

#[test]
fn decode_errors_are_classified() {
    let dir = tempdir().unwrap();
    assert!(matches!(load_wav(dir.path().join("absent.wav")), Err(DspError::MissingFile(_))));

    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"RIFF\x04\x00\x00\x00WAVEjunk").unwrap();
    assert!(matches!(load_wav(&junk), Err(DspError::MalformedHeader { .. })));

    let text = dir.path().join("text.wav");
    std::fs::write(&text, b"this is not audio at all").unwrap();
    assert!(matches!(load_wav(&text), Err(DspError::MalformedHeader { .. })));

    let adpcm = dir.path().join("adpcm.wav");
    let mut bytes = Vec::new();
    let fmt_len = 16u32;
    let data: Vec<u8> = vec![0; 16];
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(4 + 8 + fmt_len + 8 + data.len() as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&fmt_len.to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes()); // ADPCM
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&44_100u32.to_le_bytes());
    bytes.extend_from_slice(&(44_100u32 * 2).to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes());
    bytes.extend_from_slice(&16u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&data);
    std::fs::write(&adpcm, bytes).unwrap();
    assert!(matches!(load_wav(&adpcm), Err(DspError::UnsupportedCodec { .. })));
}

#[test]
fn silent_file_stays_silent_through_normalization() {
    let clip = AudioClip::mono(vec![0.0; 44_100], 44_100);
    let out = prepare_waveform(&clip).unwrap();
    assert_eq!(out.samples.len(), 22_050);
    assert!(out.samples.iter().all(|&s| s == 0.0));
    let mel = preprocess_clip(&clip, &MelConfig::default()).unwrap();
    assert!(mel.values().iter().all(|&v| v == LOG_FLOOR.ln()));
}

#[test]
fn stereo_downmix_is_the_channel_mean() {
    let left = sine(440.0, 22_050, 0.1, 0.8);
    let right: Vec<f64> = left.iter().map(|s| -0.5 * s + 0.1).collect();
    let interleaved: Vec<f64> = left.iter().zip(&right).flat_map(|(l, r)| [*l, *r]).collect();
    let clip = AudioClip {
        samples: interleaved,
        sample_rate: 22_050,
        channel_count: 2,
    };
    let out = prepare_waveform(&clip).unwrap();
    let mean: Vec<f64> = left.iter().zip(&right).map(|(l, r)| (l + r) / 2.0).collect();
    let peak = mean.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    for (o, m) in out.samples.iter().zip(&mean) {
        assert!((o - m / peak).abs() < 1e-12);
    }
}

#[test]
fn decimation_halves_length_and_keeps_a_passband_sine() {
    for n in [0, 1, 2, 3, 1001, 44_100] {
        assert_eq!(decimate_by_two(&vec![0.0; n]).len(), n / 2);
    }
    let x = sine(1000.0, 44_100, 1.0, 0.5);
    let y = decimate_by_two(&x);
    // Reference: the same sine sampled directly at 22.05 kHz.
    let reference = sine(1000.0, 22_050, 1.0, 0.5);
    let interior = 200..y.len() - 200;
    let energy = |v: &[f64]| v.iter().map(|s| s * s).sum::<f64>();
    let ratio = energy(&y[interior.clone()]) / energy(&reference[interior.clone()]);
    assert!((ratio - 1.0).abs() < 0.01, "energy ratio {ratio}");
    let worst = interior.map(|i| (y[i] - reference[i]).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01, "sample error {worst}");
}

#[test]
fn unsupported_rate_is_rejected() {
    let clip = AudioClip::mono(vec![0.1; 48_000], 48_000);
    assert!(matches!(prepare_waveform(&clip), Err(DspError::UnsupportedSampleRate(48_000))));
}

#[test]
fn chunk_lengths_give_expected_frame_counts() {
    let config = MelConfig::default();
    for (seconds, frames) in [(0.5, 21), (1.0, 43), (1.5, 64), (3.0, 129)] {
        assert_eq!(config.frames_for_seconds(seconds), frames);
        let clip = AudioClip::mono(sine(880.0, 44_100, seconds, 0.3), 44_100);
        let mel = preprocess_clip(&clip, &config).unwrap();
        assert_eq!((mel.frame_count(), mel.bins()), (frames, 128), "{seconds} s");
        assert!(mel.values().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn clip_shorter_than_one_window_fails() {
    let clip = AudioClip::mono(vec![0.1; 2000], 44_100);
    assert!(matches!(
        preprocess_clip(&clip, &MelConfig::default()),
        Err(DspError::TooShort { samples: 1000, fft_size: 1024 })
    ));
}

#[test]
fn preprocessing_is_deterministic_and_gain_invariant() {
    let mut x = sine(523.25, 44_100, 1.0, 0.2);
    for (i, s) in x.iter_mut().enumerate() {
        *s += 0.05 * (2.0 * PI * 1568.0 * i as f64 / 44_100.0).sin();
    }
    let config = MelConfig::default();
    let base = preprocess_clip(&AudioClip::mono(x.clone(), 44_100), &config).unwrap();
    let again = preprocess_clip(&AudioClip::mono(x.clone(), 44_100), &config).unwrap();
    assert_eq!(base, again);
    for c in [0.1, 0.5, 2.0] {
        let scaled: Vec<f64> = x.iter().map(|s| c * s).collect();
        let mel = preprocess_clip(&AudioClip::mono(scaled, 44_100), &config).unwrap();
        let worst = mel
            .values()
            .iter()
            .zip(base.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "gain {c}: {worst}");
    }
}

#[test]
fn file_round_trip_matches_in_memory_chain() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let clip = AudioClip::mono(sine(440.0, 44_100, 1.0, 0.5), 44_100);
    write_wav_i16(&path, &clip).unwrap();
    let from_file = preprocess(&path, &MelConfig::default()).unwrap();
    assert_eq!(from_file.frame_count(), 43);
    let cache = dir.path().join("tone.mels");
    save_mel_cache(&from_file, &cache).unwrap();
    let back = load_mel_cache(&cache).unwrap();
    for (a, b) in back.values().iter().zip(from_file.values()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
}

#[test]
fn slicing_selects_whole_frames() {
    let config = MelConfig::default();
    let values: Vec<f64> = (0..5 * 128).map(|i| i as f64).collect();
    let mel = MelSpectrogram::from_values(values, 5, config).unwrap();
    let s = mel.slice_frames(2, 2);
    assert_eq!(s.frame_count(), 2);
    assert_eq!(s.frame(0), mel.frame(2));
    assert_eq!(s.frame(1), mel.frame(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frame_count_is_floor_of_samples_over_hop(samples in 1024usize..40_000) {
        let config = MelConfig::default();
        let clip = AudioClip::mono(vec![0.0; samples], 22_050);
        let mel = preprocess_clip(&clip, &config).unwrap();
        prop_assert_eq!(mel.frame_count(), samples / 512);
    }
}
