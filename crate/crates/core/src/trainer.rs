//! Chunked single-label training with validation-based early stopping.
//!
//! Mini-batch gradients are computed in fixed leaves of [`LEAF_SIZE`]
//! samples that may run on any number of worker threads; the leaf sums are
//! then combined by a pairwise tree in leaf order, so the result does not
//! depend on the thread count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dsp::{MelConfig, MelSpectrogram};
use crate::network::{mel_to_input, Gradients, Model, ModelError};
use crate::rng::{self, derive_seed};
use crate::tensor::{
    adam_step, categorical_cross_entropy, categorical_cross_entropy_grad, ActivationKind, AdamConfig, CrossEntropy,
    TensorError,
};
use crate::NUM_CLASSES;

/// Samples per gradient leaf.
pub const LEAF_SIZE: usize = 16;
/// Durations the window length may take; each divides a 3 s excerpt.
pub const WINDOW_CHOICES: [f64; 4] = [0.5, 1.0, 1.5, 3.0];

const STREAM_INIT: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set holds a single class; at least two are needed")]
    SingleClass,
    #[error("window of {window} frames is longer than the {excerpt}-frame excerpt")]
    WindowTooLong { window: usize, excerpt: usize },
    #[error("validation fraction {fraction} leaves an empty split of {n} chunks")]
    EmptySplit { fraction: f64, n: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("chunk has {actual} frames, expected {expected}")]
    ChunkShape { expected: usize, actual: usize },
    #[error("label index {0} out of range")]
    BadLabel(usize),
    #[error("training loss became non-finite at epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub window_seconds: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub activation: ActivationKind,
    pub loss: CrossEntropy,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            window_seconds: 1.0,
            learning_rate: 0.001,
            batch_size: 128,
            validation_fraction: 0.15,
            patience_epochs: 2,
            max_epochs: 100,
            seed: 0,
            activation: ActivationKind::LeakyRelu { alpha: 0.33 },
            loss: CrossEntropy::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        let ratio = 3.0 / self.window_seconds;
        if !(self.window_seconds > 0.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return bad(format!("window {} s does not divide 3 s", self.window_seconds));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation fraction {} outside (0, 1)", self.validation_fraction));
        }
        if self.patience_epochs == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be at least 1".into());
        }
        if let ActivationKind::LeakyRelu { alpha } = self.activation {
            ActivationKind::leaky(alpha)?;
        }
        Ok(())
    }

    /// Frames per training chunk and analysis window.
    pub fn window_frames(&self) -> usize {
        MelConfig::default().frames_for_seconds(self.window_seconds)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// A fixed-length chunk with the class index of its excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledChunk {
    pub mel: MelSpectrogram,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<EpochLoss>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub train_chunks: usize,
    pub validation_chunks: usize,
    /// Not serialized, so that summaries of identical runs are identical.
    #[serde(skip)]
    pub wall_time: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Splits an excerpt into consecutive non-overlapping chunks of
/// `window_frames(window_seconds)` frames, dropping the remainder.
pub fn slice_excerpt(mel: &MelSpectrogram, window_seconds: f64) -> Result<Vec<MelSpectrogram>, TrainError> {
    let window = mel.config.frames_for_seconds(window_seconds);
    let excerpt = mel.frame_count();
    if window == 0 || window > excerpt {
        return Err(TrainError::WindowTooLong { window, excerpt });
    }
    Ok((0..excerpt / window).map(|k| mel.slice_frames(k * window, window)).collect())
}

/// Uniform random split of `n` items into `(train, validation)` index
/// lists, `round(fraction·n)` going to validation. Both lists are sorted.
pub fn split_validation(n: usize, fraction: f64, rng: &mut rng::Rng) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(TrainError::EmptySplit { fraction, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the validation loss has gone `patience` epochs without
/// improving on the best value seen.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

fn one_hot(label: usize) -> [f64; NUM_CLASSES] {
    let mut t = [0.0; NUM_CLASSES];
    t[label] = 1.0;
    t
}

fn add_into(acc: &mut Gradients, other: &Gradients) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Pairwise sum in a fixed shape: `((l0+l1)+(l2+l3))+…`.
fn tree_sum(mut parts: Vec<(Gradients, f64)>) -> (Gradients, f64) {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((mut g, l)) = it.next() {
            match it.next() {
                Some((g2, l2)) => {
                    add_into(&mut g, &g2);
                    next.push((g, l + l2));
                }
                None => next.push((g, l)),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one leaf")
}

/// Loss and classification result of a model on a chunk set, dropout off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Adam training state around a model.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    config: TrainingConfig,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainingConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let model = Model::build(
            config.activation,
            config.window_frames(),
            derive_seed(config.seed, &[STREAM_INIT]),
        )?;
        Ok(Self {
            model,
            config,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn check_chunks(&self, chunks: &[LabeledChunk]) -> Result<(), TrainError> {
        let expected = self.model.spec.input_frames;
        for c in chunks {
            if c.mel.frame_count() != expected || c.mel.bins() != crate::network::MEL_BINS {
                return Err(TrainError::ChunkShape {
                    expected,
                    actual: c.mel.frame_count(),
                });
            }
            if c.label >= NUM_CLASSES {
                return Err(TrainError::BadLabel(c.label));
            }
        }
        Ok(())
    }

    /// Summed gradient and loss over one leaf, samples in order.
    fn leaf(&self, chunks: &[&LabeledChunk], seeds: &[u64]) -> Result<(Gradients, f64), TrainError> {
        let mut grads = self.model.zero_gradients();
        let mut loss = 0.0;
        for (chunk, &seed) in chunks.iter().zip(seeds) {
            let input = mel_to_input(&chunk.mel);
            let trace = self.model.forward_trace(&input, true, &mut rng::seeded(seed))?;
            let target = one_hot(chunk.label);
            loss += categorical_cross_entropy(&trace.probabilities, &target, self.config.loss)?;
            let g = categorical_cross_entropy_grad(&trace.probabilities, &target, self.config.loss)?;
            self.model.backward(&trace, &g, &mut grads);
        }
        Ok((grads, loss))
    }

    /// One pass over `train` in a freshly shuffled order; returns the mean
    /// training loss (dropout on).
    pub fn run_epoch(&mut self, train: &[LabeledChunk]) -> Result<f64, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        self.check_chunks(train)?;
        self.epoch += 1;
        let epoch = self.epoch as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::derived(self.config.seed, &[STREAM_SHUFFLE, epoch]));
        let adam = self.config.adam();
        let mut total = 0.0;
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let seeds: Vec<u64> = (0..batch.len())
                .map(|i| derive_seed(self.config.seed, &[STREAM_DROPOUT, epoch, b as u64, i as u64]))
                .collect();
            let samples: Vec<&LabeledChunk> = batch.iter().map(|&i| &train[i]).collect();
            let leaves = samples
                .par_chunks(LEAF_SIZE)
                .zip(seeds.par_chunks(LEAF_SIZE))
                .map(|(c, s)| self.leaf(c, s))
                .collect::<Result<Vec<_>, _>>()?;
            let (grads, loss) = tree_sum(leaves);
            if !loss.is_finite() {
                return Err(TrainError::NonFinite(self.epoch));
            }
            total += loss;
            let scale = 1.0 / batch.len() as f64;
            for (p, g) in self.model.parameters.iter_mut().zip(grads) {
                p.tensor.set_grad(g.into_iter().map(|v| v * scale).collect())?;
                adam_step(p, &adam)?;
                p.tensor.clear_grad();
            }
        }
        Ok(total / train.len() as f64)
    }

    /// Mean loss and argmax accuracy with dropout off.
    pub fn evaluate(&self, chunks: &[LabeledChunk]) -> Result<Evaluation, TrainError> {
        evaluate_chunks(&self.model, chunks, self.config.loss)
    }
}

pub fn evaluate_chunks(model: &Model, chunks: &[LabeledChunk], loss: CrossEntropy) -> Result<Evaluation, TrainError> {
    if chunks.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let per_chunk = chunks
        .par_iter()
        .map(|c| -> Result<(f64, bool), TrainError> {
            let p = model.predict(&c.mel)?;
            let l = categorical_cross_entropy(&p, &one_hot(c.label), loss)?;
            Ok((l, argmax(&p) == c.label))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = chunks.len() as f64;
    Ok(Evaluation {
        mean_loss: per_chunk.iter().map(|r| r.0).sum::<f64>() / n,
        accuracy: per_chunk.iter().filter(|r| r.1).count() as f64 / n,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Splits off a validation set, trains with early stopping and returns the
/// model from the best validation epoch.
pub fn train(chunks: &[LabeledChunk], config: &TrainingConfig) -> Result<(Model, TrainReport), TrainError> {
    train_with_log(chunks, config, |_| {})
}

/// [`train`], calling `log` after every epoch.
pub fn train_with_log(
    chunks: &[LabeledChunk],
    config: &TrainingConfig,
    mut log: impl FnMut(&EpochLoss),
) -> Result<(Model, TrainReport), TrainError> {
    let started = Instant::now();
    config.validate()?;
    if chunks.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut classes: Vec<usize> = chunks.iter().map(|c| c.label).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(TrainError::SingleClass);
    }
    let (train_idx, val_idx) = split_validation(
        chunks.len(),
        config.validation_fraction,
        &mut rng::derived(config.seed, &[STREAM_SPLIT]),
    )?;
    let train_set: Vec<LabeledChunk> = train_idx.iter().map(|&i| chunks[i].clone()).collect();
    let val_set: Vec<LabeledChunk> = val_idx.iter().map(|&i| chunks[i].clone()).collect();

    let mut trainer = Trainer::new(*config)?;
    trainer.check_chunks(chunks)?;
    let mut stopper = EarlyStopping::new(config.patience_epochs);
    let mut best_model = trainer.model().clone();
    let mut epoch_losses = Vec::new();
    for _ in 0..config.max_epochs {
        let train_loss = trainer.run_epoch(&train_set)?;
        let validation_loss = trainer.evaluate(&val_set)?.mean_loss;
        let record = EpochLoss {
            epoch: trainer.epoch(),
            train_loss,
            validation_loss,
        };
        log(&record);
        epoch_losses.push(record);
        match stopper.observe(record.epoch, validation_loss) {
            StopDecision::Improved => best_model = trainer.model().clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let (best_epoch, best_validation_loss) = stopper.best();
    let report = TrainReport {
        stopped_epoch: trainer.epoch(),
        best_epoch,
        best_validation_loss,
        train_chunks: train_set.len(),
        validation_chunks: val_set.len(),
        epoch_losses,
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok((best_model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mel(frames: usize, fill: f64) -> MelSpectrogram {
        MelSpectrogram::from_values(vec![fill; frames * 128], frames, MelConfig::default()).unwrap()
    }

    #[test]
    fn slicing_counts_follow_the_frame_formula() {
        let excerpt = mel(129, 0.0);
        assert_eq!(slice_excerpt(&excerpt, 1.0).unwrap().len(), 3);
        let whole = slice_excerpt(&excerpt, 3.0).unwrap();
        assert_eq!(whole, vec![excerpt.clone()]);
        let halves = slice_excerpt(&excerpt, 0.5).unwrap();
        assert_eq!(halves.len(), 6);
        assert!(halves.iter().all(|c| c.frame_count() == 21));
        assert!(matches!(
            slice_excerpt(&mel(40, 0.0), 1.0),
            Err(TrainError::WindowTooLong { window: 43, excerpt: 40 })
        ));
    }

    #[test]
    fn chunks_are_consecutive_and_disjoint() {
        let values: Vec<f64> = (0..129 * 128).map(|i| (i / 128) as f64).collect();
        let excerpt = MelSpectrogram::from_values(values, 129, MelConfig::default()).unwrap();
        let chunks = slice_excerpt(&excerpt, 1.0).unwrap();
        for (k, c) in chunks.iter().enumerate() {
            assert_eq!(c.frame(0)[0], (43 * k) as f64);
            assert_eq!(c.frame(42)[0], (43 * k + 42) as f64);
        }
    }

    #[test]
    fn split_sizes_and_partition() {
        let (train, val) = split_validation(100, 0.15, &mut rng::seeded(1)).unwrap();
        assert_eq!((train.len(), val.len()), (85, 15));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_validation(100, 0.15, &mut rng::seeded(1)).unwrap(), (train, val));
        assert!(matches!(split_validation(3, 0.15, &mut rng::seeded(1)), Err(TrainError::EmptySplit { .. })));
        assert!(matches!(split_validation(0, 0.15, &mut rng::seeded(1)), Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn early_stopping_waits_for_patience() {
        let mut s = EarlyStopping::new(2);
        assert_eq!(s.observe(1, 1.0), StopDecision::Improved);
        assert_eq!(s.observe(2, 1.1), StopDecision::Continue);
        assert_eq!(s.observe(3, 1.2), StopDecision::Stop);
        assert_eq!(s.best(), (1, 1.0));

        let mut s = EarlyStopping::new(2);
        for (e, l) in [(1, 3.0), (2, 2.0), (3, 2.5), (4, 1.5), (5, 1.6)] {
            assert_ne!(s.observe(e, l), StopDecision::Stop);
        }
        assert_eq!(s.observe(6, 1.5), StopDecision::Stop);
        assert_eq!(s.best(), (4, 1.5));
    }

    #[test]
    fn tree_sum_adds_everything() {
        let parts: Vec<(Gradients, f64)> = (0..5).map(|i| (vec![vec![i as f64; 3]], i as f64)).collect();
        let (g, l) = tree_sum(parts);
        assert_eq!(g, vec![vec![10.0; 3]]);
        assert_eq!(l, 10.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        for w in WINDOW_CHOICES {
            let c = TrainingConfig {
                window_seconds: w,
                ..Default::default()
            };
            assert!(c.validate().is_ok(), "{w}");
        }
        let bad = [
            TrainingConfig {
                window_seconds: 0.7,
                ..Default::default()
            },
            TrainingConfig {
                validation_fraction: 1.0,
                ..Default::default()
            },
            TrainingConfig {
                batch_size: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert_eq!(TrainingConfig::default().window_frames(), 43);
    }

    #[test]
    fn degenerate_datasets_are_rejected() {
        let config = TrainingConfig {
            window_seconds: 0.5,
            ..Default::default()
        };
        assert!(matches!(train(&[], &config), Err(TrainError::EmptyDataset)));
        let one_class: Vec<LabeledChunk> = (0..10).map(|_| LabeledChunk { mel: mel(21, 0.0), label: 3 }).collect();
        assert!(matches!(train(&one_class, &config), Err(TrainError::SingleClass)));
    }
}
