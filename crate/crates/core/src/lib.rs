//! Predominant instrument recognition with a deep convolutional network.
//!
//! The pipeline: [`dsp`] turns audio into log mel-spectrograms, [`network`]
//! maps fixed-length windows to 11 sigmoid outputs, [`trainer`] fits the
//! network on single-label chunks, [`aggregator`] turns a variable-length
//! excerpt into a label set and [`evaluator`] scores label sets. [`dataset`]
//! reads IRMAS-layout corpora and generates a synthetic stand-in.

pub mod aggregator;
pub mod dataset;
pub mod dsp;
pub mod evaluator;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use aggregator::{AggregationResult, Strategy, WindowPredictions};
pub use dataset::{DatasetManifest, InstrumentLabel, LabeledExcerpt, Split};
pub use dsp::{AudioClip, MelConfig, MelSpectrogram};
pub use evaluator::{ClassCounts, EvalReport};
pub use network::{ArchitectureSpec, Model};
pub use tensor::{ActivationKind, Parameter, Tensor};
pub use trainer::{TrainReport, TrainingConfig};

/// Number of instrument classes.
pub const NUM_CLASSES: usize = 11;
