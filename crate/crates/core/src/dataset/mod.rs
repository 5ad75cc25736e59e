//! IRMAS-layout corpora: label vocabulary, directory scans, manifests and a
//! synthetic stand-in corpus.
//!
//! Training roots hold one directory per instrument with 3 s WAV excerpts.
//! Testing roots hold WAV excerpts, each next to a same-stem `.txt` file
//! listing one instrument abbreviation per line. Bracketed metadata in
//! file names is ignored.

mod synth;

pub use synth::{render_timbre, synth_corpus, SynthSpec, Timbre, TIMBRES};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::DspError;
use crate::NUM_CLASSES;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown instrument label {0:?}")]
    UnknownLabel(String),
    #[error("unknown instrument directory {0}")]
    UnknownDirectory(PathBuf),
    #[error("class directory {0} holds no WAV files")]
    EmptyClass(PathBuf),
    #[error("no excerpts found under {0}")]
    EmptyRoot(PathBuf),
    #[error("{0} has no label file")]
    MissingLabels(PathBuf),
    #[error("label file {0} has no valid line")]
    NoLabels(PathBuf),
    #[error("invalid label in {path}: {label:?}")]
    BadLabelLine { path: PathBuf, label: String },
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
    #[error("malformed manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] DspError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The eleven pitched instruments, in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InstrumentLabel {
    Cello,
    Clarinet,
    Flute,
    AcousticGuitar,
    ElectricGuitar,
    Organ,
    Piano,
    Saxophone,
    Trumpet,
    Violin,
    Voice,
}

impl InstrumentLabel {
    pub const ALL: [InstrumentLabel; NUM_CLASSES] = [
        Self::Cello,
        Self::Clarinet,
        Self::Flute,
        Self::AcousticGuitar,
        Self::ElectricGuitar,
        Self::Organ,
        Self::Piano,
        Self::Saxophone,
        Self::Trumpet,
        Self::Violin,
        Self::Voice,
    ];

    pub const ABBREVIATIONS: [&'static str; NUM_CLASSES] =
        ["cel", "cla", "flu", "acg", "elg", "org", "pia", "sax", "tru", "vio", "voi"];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn abbreviation(self) -> &'static str {
        Self::ABBREVIATIONS[self.index()]
    }
}

impl fmt::Display for InstrumentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbreviation())
    }
}

impl FromStr for InstrumentLabel {
    type Err = DatasetError;

    /// Canonical abbreviations only; see [`LabelParser`] for aliases.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ABBREVIATIONS
            .iter()
            .position(|a| *a == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| DatasetError::UnknownLabel(s.to_string()))
    }
}

impl Serialize for InstrumentLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.abbreviation())
    }
}

impl<'de> Deserialize<'de> for InstrumentLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Abbreviation parser with an alias table. The defaults accept the
/// spellings used by the public IRMAS release (`gac`, `gel`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelParser {
    aliases: BTreeMap<String, InstrumentLabel>,
}

impl Default for LabelParser {
    fn default() -> Self {
        let mut p = Self {
            aliases: BTreeMap::new(),
        };
        p.add_alias("gac", InstrumentLabel::AcousticGuitar);
        p.add_alias("gel", InstrumentLabel::ElectricGuitar);
        p
    }
}

impl LabelParser {
    pub fn add_alias(&mut self, alias: &str, label: InstrumentLabel) {
        self.aliases.insert(alias.to_string(), label);
    }

    pub fn parse(&self, s: &str) -> Result<InstrumentLabel, DatasetError> {
        let s = s.trim();
        match self.aliases.get(s) {
            Some(&l) => Ok(l),
            None => s.parse(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExcerpt {
    #[serde(rename = "path")]
    pub audio_path: PathBuf,
    /// Sorted, without duplicates.
    pub labels: Vec<InstrumentLabel>,
    #[serde(rename = "duration")]
    pub duration_seconds: f64,
}

impl LabeledExcerpt {
    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: Split,
    pub excerpts: Vec<LabeledExcerpt>,
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    #[serde(flatten)]
    excerpt: LabeledExcerpt,
    split: Split,
}

impl DatasetManifest {
    /// Per-class label counts in canonical order.
    pub fn counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for e in &self.excerpts {
            for l in &e.labels {
                c[l.index()] += 1;
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.excerpts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excerpts.is_empty()
    }

    /// One JSON object per excerpt: `path`, `labels`, `duration`, `split`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.excerpts {
            let line = ManifestLine {
                excerpt: e.clone(),
                split: self.split,
            };
            out += &serde_json::to_string(&line).expect("manifest line serializes");
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self, DatasetError> {
        let mut split = None;
        let mut excerpts = Vec::new();
        for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |reason: String| DatasetError::Manifest { line: i + 1, reason };
            let line: ManifestLine = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
            if *split.get_or_insert(line.split) != line.split {
                return Err(bad("mixed splits".into()));
            }
            excerpts.push(line.excerpt);
        }
        let split = split.ok_or(DatasetError::Manifest {
            line: 0,
            reason: "empty manifest".into(),
        })?;
        Ok(Self { split, excerpts })
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut entries = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    Ok(entries)
}

fn is_wav(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn wav_duration(path: &Path) -> Result<f64, DatasetError> {
    let reader = hound::WavReader::open(path).map_err(|e| {
        DspError::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    Ok(reader.duration() as f64 / reader.spec().sample_rate as f64)
}

/// One singleton-labeled excerpt per WAV under each instrument directory.
pub fn scan_training(root: impl AsRef<Path>, parser: &LabelParser) -> Result<DatasetManifest, DatasetError> {
    let root = root.as_ref();
    let mut excerpts = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let label = parser
            .parse(name)
            .map_err(|_| DatasetError::UnknownDirectory(dir.clone()))?;
        let wavs: Vec<PathBuf> = sorted_entries(&dir)?.into_iter().filter(|p| is_wav(p)).collect();
        if wavs.is_empty() {
            return Err(DatasetError::EmptyClass(dir));
        }
        for path in wavs {
            excerpts.push(LabeledExcerpt {
                duration_seconds: wav_duration(&path)?,
                audio_path: path,
                labels: vec![label],
            });
        }
    }
    if excerpts.is_empty() {
        return Err(DatasetError::EmptyRoot(root.to_path_buf()));
    }
    Ok(DatasetManifest {
        split: Split::Train,
        excerpts,
    })
}

/// Parses a label file: one abbreviation per non-blank line, duplicates
/// collapsed.
pub fn read_label_file(path: &Path, parser: &LabelParser) -> Result<Vec<InstrumentLabel>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        labels.push(parser.parse(line).map_err(|_| DatasetError::BadLabelLine {
            path: path.to_path_buf(),
            label: line.to_string(),
        })?);
    }
    labels.sort();
    labels.dedup();
    if labels.is_empty() {
        return Err(DatasetError::NoLabels(path.to_path_buf()));
    }
    Ok(labels)
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), DatasetError> {
    for p in sorted_entries(dir)? {
        if p.is_dir() {
            collect_wavs(&p, out)?;
        } else if is_wav(&p) {
            out.push(p);
        }
    }
    Ok(())
}

/// Every WAV below `root` (recursively) with the labels of its sibling
/// `.txt` file.
pub fn scan_testing(root: impl AsRef<Path>, parser: &LabelParser) -> Result<DatasetManifest, DatasetError> {
    let root = root.as_ref();
    let mut wavs = Vec::new();
    collect_wavs(root, &mut wavs)?;
    if wavs.is_empty() {
        return Err(DatasetError::EmptyRoot(root.to_path_buf()));
    }
    let excerpts = wavs
        .into_iter()
        .map(|path| {
            let txt = path.with_extension("txt");
            if !txt.is_file() {
                return Err(DatasetError::MissingLabels(path));
            }
            Ok(LabeledExcerpt {
                labels: read_label_file(&txt, parser)?,
                duration_seconds: wav_duration(&path)?,
                audio_path: path,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DatasetManifest {
        split: Split::Test,
        excerpts,
    })
}
