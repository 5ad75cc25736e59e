//! Synthetic desk-scale corpus in IRMAS layout.
//!
//! Each pseudo-instrument is an additive-synthesis recipe: a fundamental
//! range, a harmonic rolloff, optional vibrato, noise, envelope, formant
//! weighting and saturation. Both splits mix one to three recipes and label
//! every source within 6 dB of the loudest. Training excerpts (3 s) keep
//! their accompaniment outside that window, so each has a single label;
//! testing excerpts (5 to 20 s) may carry several.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;

use super::{io_err, DatasetError, InstrumentLabel};
use crate::dsp::{write_wav_i16, AudioClip, SOURCE_RATE};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timbre {
    pub f0_range: (f64, f64),
    /// Harmonic `n` has amplitude `n^-rolloff`.
    pub rolloff: f64,
    pub even_gain: f64,
    pub max_harmonics: usize,
    pub vibrato_hz: f64,
    pub vibrato_depth: f64,
    pub noise: f64,
    pub attack: f64,
    /// Exponential decay rate per second; 0 sustains.
    pub decay: f64,
    pub inharmonicity: f64,
    /// `(centre Hz, width Hz)` resonances; empty for a flat envelope.
    pub formants: &'static [(f64, f64)],
    /// `tanh` saturation drive; 0 for none.
    pub drive: f64,
}

const fn timbre(f0_range: (f64, f64), rolloff: f64, even_gain: f64, max_harmonics: usize) -> Timbre {
    Timbre {
        f0_range,
        rolloff,
        even_gain,
        max_harmonics,
        vibrato_hz: 0.0,
        vibrato_depth: 0.0,
        noise: 0.0,
        attack: 0.02,
        decay: 0.0,
        inharmonicity: 0.0,
        formants: &[],
        drive: 0.0,
    }
}

/// One recipe per instrument, in canonical label order.
pub const TIMBRES: [Timbre; 11] = [
    // cel
    Timbre {
        vibrato_hz: 5.5,
        vibrato_depth: 0.006,
        noise: 0.005,
        attack: 0.06,
        ..timbre((65.0, 260.0), 1.0, 1.0, 40)
    },
    // cla
    Timbre {
        noise: 0.01,
        attack: 0.03,
        ..timbre((147.0, 590.0), 1.1, 0.08, 30)
    },
    // flu
    Timbre {
        vibrato_hz: 5.0,
        vibrato_depth: 0.004,
        noise: 0.06,
        attack: 0.05,
        ..timbre((262.0, 1050.0), 2.4, 1.0, 12)
    },
    // acg
    Timbre {
        noise: 0.002,
        attack: 0.003,
        decay: 3.0,
        inharmonicity: 1e-4,
        ..timbre((82.0, 330.0), 1.4, 1.0, 40)
    },
    // elg
    Timbre {
        attack: 0.005,
        decay: 0.4,
        drive: 3.0,
        ..timbre((82.0, 330.0), 0.9, 1.0, 30)
    },
    // org
    timbre((65.0, 520.0), 0.3, 1.0, 8),
    // pia
    Timbre {
        attack: 0.004,
        decay: 1.8,
        inharmonicity: 4e-4,
        ..timbre((110.0, 880.0), 1.8, 0.7, 40)
    },
    // sax
    Timbre {
        vibrato_hz: 5.0,
        vibrato_depth: 0.01,
        noise: 0.03,
        attack: 0.04,
        formants: &[(1500.0, 700.0)],
        ..timbre((138.0, 700.0), 0.7, 0.8, 40)
    },
    // tru
    Timbre {
        attack: 0.03,
        formants: &[(1200.0, 500.0)],
        drive: 1.0,
        ..timbre((165.0, 940.0), 0.4, 1.0, 30)
    },
    // vio
    Timbre {
        vibrato_hz: 6.0,
        vibrato_depth: 0.01,
        noise: 0.01,
        attack: 0.05,
        formants: &[(3000.0, 1200.0)],
        ..timbre((196.0, 1320.0), 1.0, 1.0, 40)
    },
    // voi
    Timbre {
        vibrato_hz: 5.5,
        vibrato_depth: 0.02,
        noise: 0.01,
        attack: 0.08,
        formants: &[(700.0, 130.0), (1200.0, 150.0), (2600.0, 250.0)],
        ..timbre((100.0, 800.0), 1.2, 1.0, 40)
    },
];

const MAX_PARTIAL_HZ: f64 = 9000.0;
const RELEASE_SECONDS: f64 = 0.02;

fn render_note(t: &Timbre, f0: f64, n: usize, rate: f64, r: &mut rng::Rng, out: &mut Vec<f64>) {
    let partials: Vec<(f64, f64)> = (1..=t.max_harmonics)
        .map(|h| {
            let k = h as f64;
            let ratio = k * (1.0 + t.inharmonicity * k * k).sqrt();
            let mut amp = k.powf(-t.rolloff) * if h % 2 == 0 { t.even_gain } else { 1.0 };
            if !t.formants.is_empty() {
                let f = ratio * f0;
                amp *= 0.05 + t.formants.iter().map(|(c, w)| (-((f - c) / w).powi(2)).exp()).sum::<f64>();
            }
            (ratio, amp)
        })
        .filter(|(ratio, _)| ratio * f0 < MAX_PARTIAL_HZ)
        .collect();
    let vib_phase = r.gen_range(0.0..TAU);
    let release = (RELEASE_SECONDS * rate) as usize;
    let mut phase = 0.0f64;
    for i in 0..n {
        let time = i as f64 / rate;
        let vib = 1.0 + t.vibrato_depth * (TAU * t.vibrato_hz * time + vib_phase).sin();
        phase += TAU * f0 * vib / rate;
        let mut s: f64 = partials.iter().map(|(ratio, amp)| amp * (ratio * phase).sin()).sum();
        if t.drive > 0.0 {
            s = (t.drive * s).tanh();
        }
        s += t.noise * r.gen_range(-1.0..1.0);
        let attack = if t.attack > 0.0 { (time / t.attack).min(1.0) } else { 1.0 };
        let tail = ((n - i) as f64 / release as f64).min(1.0);
        out.push(s * attack * tail * (-t.decay * time).exp());
    }
}

/// A sequence of notes with log-uniform fundamentals filling `samples`
/// samples at `rate`, scaled to unit RMS.
pub fn render_timbre(t: &Timbre, samples: usize, rate: u32, r: &mut rng::Rng) -> Vec<f64> {
    let rate_f = rate as f64;
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let len = ((r.gen_range(0.5..1.6) * rate_f) as usize).min(samples - out.len());
        let (lo, hi) = t.f0_range;
        let f0 = (lo.ln() + r.gen::<f64>() * (hi.ln() - lo.ln())).exp();
        render_note(t, f0, len, rate_f, r, &mut out);
    }
    let rms = (out.iter().map(|s| s * s).sum::<f64>() / samples as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|s| *s /= rms);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// The first `classes` instruments in canonical order.
    pub classes: usize,
    pub train_per_class: usize,
    pub test_excerpts: usize,
    pub seed: u64,
    pub test_seconds: (f64, f64),
}

impl SynthSpec {
    pub fn new(classes: usize, train_per_class: usize, test_excerpts: usize, seed: u64) -> Self {
        Self {
            classes,
            train_per_class,
            test_excerpts,
            seed,
            test_seconds: (5.0, 20.0),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidSpec(m.to_string()));
        if !(2..=11).contains(&self.classes) {
            return bad("class count must be between 2 and 11");
        }
        if self.train_per_class == 0 {
            return bad("need at least one training excerpt per class");
        }
        let (lo, hi) = self.test_seconds;
        if !(lo >= 1.0 && lo <= hi) {
            return bad("test durations must satisfy 1 <= min <= max");
        }
        Ok(())
    }
}

/// Sources are rendered at unit RMS and scaled by these gains.
const LABEL_WINDOW_DB: f64 = 6.0;
const QUIETEST_DB: f64 = -18.0;
const SOURCE_COUNT_WEIGHTS: [f64; 3] = [0.5, 0.35, 0.15];

const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;

fn to_stereo_clip(mono: &[f64], r: &mut rng::Rng) -> AudioClip {
    let peak = mono.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-12);
    let gain = r.gen_range(0.3..0.9) / peak;
    let samples = mono.iter().flat_map(|s| [s * gain, 0.9 * s * gain]).collect();
    AudioClip {
        samples,
        sample_rate: SOURCE_RATE,
        channel_count: 2,
    }
}

fn write_clip(path: &Path, clip: &AudioClip) -> Result<(), DatasetError> {
    write_wav_i16(path, clip)?;
    Ok(())
}

fn source_count(max_sources: usize, r: &mut rng::Rng) -> usize {
    let u: f64 = r.gen();
    let mut n = 1;
    let mut acc = SOURCE_COUNT_WEIGHTS[0];
    while n < max_sources && u >= acc {
        acc += SOURCE_COUNT_WEIGHTS[n];
        n += 1;
    }
    n
}

/// Adds `class` at `gain_db` relative to unit RMS.
fn add_source(mix: &mut [f64], class: usize, gain_db: f64, r: &mut rng::Rng) {
    let gain = 10f64.powf(gain_db / 20.0);
    let source = render_timbre(&TIMBRES[class], mix.len(), SOURCE_RATE, r);
    mix.iter_mut().zip(&source).for_each(|(m, x)| *m += gain * x);
}

/// A predominant source plus up to two accompanying sources kept below
/// the label window, so that only the predominant one is labeled.
fn training_excerpt(spec: &SynthSpec, class: usize, i: usize, path: &Path) -> Result<(), DatasetError> {
    let mut r = rng::derived(spec.seed, &[STREAM_TRAIN, class as u64, i as u64]);
    let mut mix = vec![0.0; 3 * SOURCE_RATE as usize];
    add_source(&mut mix, class, 0.0, &mut r);
    let mut pool: Vec<usize> = (0..spec.classes).filter(|&c| c != class).collect();
    for _ in 1..source_count(spec.classes.min(3), &mut r) {
        let other = pool.swap_remove(r.gen_range(0..pool.len()));
        add_source(&mut mix, other, r.gen_range(QUIETEST_DB..-LABEL_WINDOW_DB), &mut r);
    }
    write_clip(path, &to_stereo_clip(&mix, &mut r))
}

/// Renders one test mixture and returns its labels.
fn testing_excerpt(spec: &SynthSpec, i: usize, path: &Path) -> Result<Vec<InstrumentLabel>, DatasetError> {
    let mut r = rng::derived(spec.seed, &[STREAM_TEST, i as u64]);
    let (lo, hi) = spec.test_seconds;
    let seconds = (r.gen_range(lo..=hi) * 100.0).round() / 100.0;
    let samples = (seconds * SOURCE_RATE as f64).round() as usize;

    let n_sources = source_count(spec.classes.min(3), &mut r);
    let mut pool: Vec<usize> = (0..spec.classes).collect();
    let mut mix = vec![0.0; samples];
    let mut labels = Vec::new();
    for s in 0..n_sources {
        let class = pool.swap_remove(r.gen_range(0..pool.len()));
        let gain_db = if s == 0 { 0.0 } else { r.gen_range(QUIETEST_DB..0.0) };
        add_source(&mut mix, class, gain_db, &mut r);
        if gain_db >= -LABEL_WINDOW_DB {
            labels.push(InstrumentLabel::ALL[class]);
        }
    }
    labels.sort();
    write_clip(path, &to_stereo_clip(&mix, &mut r))?;
    Ok(labels)
}

/// Writes `root/train/<abbr>/<abbr>_NNNN.wav` and
/// `root/test/test_NNNN.{wav,txt}`. Returns the two split roots.
pub fn synth_corpus(spec: &SynthSpec, root: impl AsRef<Path>) -> Result<(PathBuf, PathBuf), DatasetError> {
    spec.validate()?;
    let root = root.as_ref();
    let train_root = root.join("train");
    let test_root = root.join("test");
    let mut jobs = Vec::new();
    for class in 0..spec.classes {
        let abbr = InstrumentLabel::ALL[class].abbreviation();
        let dir = train_root.join(abbr);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for i in 0..spec.train_per_class {
            jobs.push((class, i, dir.join(format!("{abbr}_{i:04}.wav"))));
        }
    }
    fs::create_dir_all(&test_root).map_err(io_err(&test_root))?;
    jobs.par_iter()
        .map(|(class, i, path)| training_excerpt(spec, *class, *i, path))
        .collect::<Result<Vec<()>, _>>()?;
    (0..spec.test_excerpts)
        .into_par_iter()
        .map(|i| {
            let wav = test_root.join(format!("test_{i:04}.wav"));
            let labels = testing_excerpt(spec, i, &wav)?;
            let txt = wav.with_extension("txt");
            let body: String = labels.iter().map(|l| format!("{l}\n")).collect();
            fs::write(&txt, body).map_err(io_err(&txt))
        })
        .collect::<Result<Vec<()>, _>>()?;
    Ok((train_root, test_root))
}
