//! Sliding-window inference over variable-length excerpts and the two
//! excerpt-level aggregation strategies.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::InstrumentLabel;
use crate::dsp::MelSpectrogram;
use crate::network::{Model, ModelError};
use crate::NUM_CLASSES;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("excerpt of {frames} frames is shorter than one {window}-frame window")]
    TooShort { frames: usize, window: usize },
    #[error("window predictions need at least one row of 11 values in [0, 1]")]
    BadPredictions,
    #[error("threshold {0} must lie in (0, 1]")]
    BadThreshold(f64),
    #[error("unknown aggregation strategy {0:?} (expected s1 or s2)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Class-wise mean of the window outputs.
    S1,
    /// Class-wise sum divided by the largest class sum.
    S2,
}

impl Strategy {
    /// Threshold grid explored for this strategy.
    pub fn threshold_grid(self) -> Vec<f64> {
        // Built from integer percentages so every entry is the nearest f64
        // to its decimal value.
        match self {
            Strategy::S1 => (1..=9).map(|k| (2 * k) as f64 / 100.0).collect(),
            Strategy::S2 => (0..=8).map(|k| (20 + 5 * k) as f64 / 100.0).collect(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::S1 => "s1",
            Strategy::S2 => "s2",
        })
    }
}

impl FromStr for Strategy {
    type Err = AggregateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" => Ok(Strategy::S1),
            "s2" => Ok(Strategy::S2),
            _ => Err(AggregateError::UnknownStrategy(s.to_string())),
        }
    }
}

/// `[n_windows × 11]` sigmoid outputs for one excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPredictions {
    rows: Vec<[f64; NUM_CLASSES]>,
    pub window_seconds: f64,
    pub hop_seconds: f64,
}

impl WindowPredictions {
    pub fn new(rows: Vec<Vec<f64>>, window_seconds: f64, hop_seconds: f64) -> Result<Self, AggregateError> {
        if rows.is_empty() {
            return Err(AggregateError::BadPredictions);
        }
        let rows = rows
            .into_iter()
            .map(|r| {
                let row: [f64; NUM_CLASSES] = r.try_into().map_err(|_| AggregateError::BadPredictions)?;
                if row.iter().all(|v| (0.0..=1.0).contains(v)) {
                    Ok(row)
                } else {
                    Err(AggregateError::BadPredictions)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            rows,
            window_seconds,
            hop_seconds,
        })
    }

    pub fn rows(&self) -> &[[f64; NUM_CLASSES]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn column_sums(&self) -> [f64; NUM_CLASSES] {
        let mut sums = [0.0; NUM_CLASSES];
        for row in &self.rows {
            sums.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        sums
    }
}

/// Window start offsets: every `floor(window/2)` frames, plus a final
/// window right-aligned to the end when the regular grid stops short.
pub fn window_offsets(frames: usize, window: usize) -> Result<Vec<usize>, AggregateError> {
    if window == 0 || frames < window {
        return Err(AggregateError::TooShort { frames, window });
    }
    let hop = (window / 2).max(1);
    let last = frames - window;
    let mut offsets: Vec<usize> = (0..=last).step_by(hop).collect();
    if *offsets.last().expect("offset 0 always present") != last {
        offsets.push(last);
    }
    Ok(offsets)
}

pub fn sliding_windows(mel: &MelSpectrogram, window_frames: usize) -> Result<Vec<MelSpectrogram>, AggregateError> {
    Ok(window_offsets(mel.frame_count(), window_frames)?
        .into_iter()
        .map(|o| mel.slice_frames(o, window_frames))
        .collect())
}

/// Runs the model (dropout off) on every window of the excerpt.
pub fn predict_excerpt(model: &Model, mel: &MelSpectrogram) -> Result<WindowPredictions, AggregateError> {
    let window = model.spec.input_frames;
    let windows = sliding_windows(mel, window)?;
    let rows = windows
        .par_iter()
        .map(|w| model.predict(w))
        .collect::<Result<Vec<_>, _>>()?;
    let frame_seconds = mel.config.hop_size as f64 / mel.config.target_rate as f64;
    WindowPredictions::new(
        rows,
        window as f64 * frame_seconds,
        (window / 2).max(1) as f64 * frame_seconds,
    )
}

/// Excerpt-level class scores.
pub fn aggregate(preds: &WindowPredictions, strategy: Strategy) -> [f64; NUM_CLASSES] {
    let sums = preds.column_sums();
    match strategy {
        Strategy::S1 => sums.map(|s| s / preds.len() as f64),
        Strategy::S2 => {
            let max = sums.iter().copied().fold(0.0, f64::max);
            // Only reachable if every output underflowed to zero: all
            // classes are then tied for the maximum.
            if max == 0.0 {
                return [1.0; NUM_CLASSES];
            }
            sums.map(|s| s / max)
        }
    }
}

/// Indices of the classes scoring at least `theta`.
pub fn threshold_labels(scores: &[f64], theta: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= theta)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationResult {
    pub strategy: Strategy,
    pub scores: [f64; NUM_CLASSES],
    pub threshold: f64,
    pub labels: Vec<InstrumentLabel>,
}

pub fn validate_threshold(theta: f64) -> Result<(), AggregateError> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(AggregateError::BadThreshold(theta))
    }
}

pub fn classify(preds: &WindowPredictions, strategy: Strategy, theta: f64) -> AggregationResult {
    let scores = aggregate(preds, strategy);
    let labels = threshold_labels(&scores, theta)
        .into_iter()
        .map(|i| InstrumentLabel::ALL[i])
        .collect();
    AggregationResult {
        strategy,
        scores,
        threshold: theta,
        labels,
    }
}

/// `path<TAB>strategy<TAB>θ<TAB>11 comma-separated scores<TAB>labels`.
pub fn prediction_line(path: &str, result: &AggregationResult) -> String {
    let scores: Vec<String> = result.scores.iter().map(|s| format!("{s:.6}")).collect();
    let labels: Vec<&str> = result.labels.iter().map(|l| l.abbreviation()).collect();
    format!(
        "{path}\t{}\t{:.2}\t{}\t{}",
        result.strategy,
        result.threshold,
        scores.join(","),
        labels.join(",")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(rows: &[[f64; 2]]) -> WindowPredictions {
        let rows = rows
            .iter()
            .map(|r| {
                let mut v = vec![0.0; NUM_CLASSES];
                v[..2].copy_from_slice(r);
                v
            })
            .collect();
        WindowPredictions::new(rows, 1.0, 0.5).unwrap()
    }

    #[test]
    fn worked_two_window_example() {
        let p = preds(&[[0.2, 0.8], [0.4, 0.6]]);
        let s1 = aggregate(&p, Strategy::S1);
        assert!((s1[0] - 0.3).abs() < 1e-12 && (s1[1] - 0.7).abs() < 1e-12);
        let s2 = aggregate(&p, Strategy::S2);
        assert!((s2[0] - 0.6 / 1.4).abs() < 1e-12);
        assert_eq!(s2[1], 1.0);
        assert!((s2[0] - 0.4286).abs() < 1e-4);
    }

    #[test]
    fn twenty_second_excerpt_offsets() {
        let offsets = window_offsets(861, 43).unwrap();
        // 39 regular windows (0, 21, …, 798) and a tail at 861 - 43.
        assert_eq!(offsets.len(), 40);
        assert_eq!(offsets[38], 798);
        assert_eq!(offsets[39], 818);
        for w in offsets[..39].windows(2) {
            assert_eq!(w[1] - w[0], 21);
        }
    }

    #[test]
    fn exact_fit_gives_one_window() {
        assert_eq!(window_offsets(43, 43).unwrap(), vec![0]);
        assert_eq!(window_offsets(64, 43).unwrap(), vec![0, 21]);
        assert!(matches!(window_offsets(42, 43), Err(AggregateError::TooShort { .. })));
    }

    #[test]
    fn thresholding_is_inclusive() {
        let mut scores = [0.0; NUM_CLASSES];
        scores[0] = 1.0;
        scores[1] = 0.49;
        scores[2] = 0.51;
        assert_eq!(threshold_labels(&scores, 0.5), vec![0, 2]);
        scores[1] = 0.5;
        assert_eq!(threshold_labels(&scores, 0.5), vec![0, 1, 2]);
    }

    #[test]
    fn grids_match_the_experiment_tables() {
        let s1 = Strategy::S1.threshold_grid();
        let s2 = Strategy::S2.threshold_grid();
        assert_eq!(s1.len(), 9);
        assert_eq!(s2.len(), 9);
        assert_eq!((s1[0], s1[8]), (0.02, 0.18));
        assert_eq!((s2[0], s2[6], s2[8]), (0.2, 0.5, 0.6));
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(WindowPredictions::new(vec![], 1.0, 0.5).is_err());
        assert!(WindowPredictions::new(vec![vec![0.5; 10]], 1.0, 0.5).is_err());
        assert!(WindowPredictions::new(vec![vec![1.5; 11]], 1.0, 0.5).is_err());
        assert!(WindowPredictions::new(vec![vec![f64::NAN; 11]], 1.0, 0.5).is_err());
    }

    #[test]
    fn dump_line_format() {
        let p = preds(&[[0.2, 0.8]]);
        let r = classify(&p, Strategy::S2, 0.2);
        let line = prediction_line("x.wav", &r);
        assert_eq!(
            line,
            "x.wav\ts2\t0.20\t0.250000,1.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000\tcel,cla"
        );
    }
}
