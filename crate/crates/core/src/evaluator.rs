//! Precision, recall and F1 with micro and macro averaging, threshold
//! sweeps and multi-run statistics.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::aggregator::{
    aggregate, predict_excerpt, threshold_labels, validate_threshold, AggregateError, Strategy, WindowPredictions,
};
use crate::dataset::{InstrumentLabel, LabeledExcerpt};
use crate::dsp::{preprocess, MelConfig};
use crate::network::Model;
use crate::NUM_CLASSES;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label index {0} is outside the 11-class vocabulary")]
    UnknownLabel(usize),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("every test excerpt failed to load ({0} skipped)")]
    NothingEvaluated(usize),
    #[error("need at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Per-class true positive, false positive and false negative counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClassCounts {
    pub tp: [u64; NUM_CLASSES],
    pub fp: [u64; NUM_CLASSES],
    #[serde(rename = "fn")]
    pub fn_: [u64; NUM_CLASSES],
}

impl ClassCounts {
    /// Adds one excerpt's predicted and annotated label sets.
    pub fn add(&mut self, predicted: &[usize], annotated: &[usize]) -> Result<(), EvalError> {
        let mut pred = [false; NUM_CLASSES];
        let mut ann = [false; NUM_CLASSES];
        for (set, labels) in [(&mut pred, predicted), (&mut ann, annotated)] {
            for &l in labels {
                *set.get_mut(l).ok_or(EvalError::UnknownLabel(l))? = true;
            }
        }
        for c in 0..NUM_CLASSES {
            match (pred[c], ann[c]) {
                (true, true) => self.tp[c] += 1,
                (true, false) => self.fp[c] += 1,
                (false, true) => self.fn_[c] += 1,
                (false, false) => {}
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ClassCounts) {
        for c in 0..NUM_CLASSES {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
    }
}

/// Functional form of [`ClassCounts::add`].
pub fn accumulate(predicted: &[usize], annotated: &[usize], counts: ClassCounts) -> Result<ClassCounts, EvalError> {
    let mut c = counts;
    c.add(predicted, annotated)?;
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        Self::from_pr(ratio(tp, tp + fp), ratio(tp, tp + fn_))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: InstrumentLabel,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(flatten)]
    pub metrics: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub threshold: f64,
    pub excerpts: usize,
    pub skipped: usize,
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_: Prf,
    pub per_class: Vec<ClassMetrics>,
}

/// Micro metrics from summed counts; macro precision, recall and F1 as
/// unweighted means of the per-class values.
pub fn micro_macro(counts: &ClassCounts) -> (Prf, Prf, Vec<ClassMetrics>) {
    let per_class: Vec<ClassMetrics> = (0..NUM_CLASSES)
        .map(|c| ClassMetrics {
            label: InstrumentLabel::ALL[c],
            tp: counts.tp[c],
            fp: counts.fp[c],
            fn_: counts.fn_[c],
            metrics: Prf::from_counts(counts.tp[c], counts.fp[c], counts.fn_[c]),
        })
        .collect();
    let (tp, fp, fn_) = (
        counts.tp.iter().sum(),
        counts.fp.iter().sum(),
        counts.fn_.iter().sum(),
    );
    let micro = Prf::from_counts(tp, fp, fn_);
    let n = NUM_CLASSES as f64;
    let macro_ = Prf {
        precision: per_class.iter().map(|m| m.metrics.precision).sum::<f64>() / n,
        recall: per_class.iter().map(|m| m.metrics.recall).sum::<f64>() / n,
        f1: per_class.iter().map(|m| m.metrics.f1).sum::<f64>() / n,
    };
    (micro, macro_, per_class)
}

impl EvalReport {
    pub fn from_counts(counts: &ClassCounts, strategy: Strategy, threshold: f64, excerpts: usize, skipped: usize) -> Self {
        let (micro, macro_, per_class) = micro_macro(counts);
        Self {
            strategy,
            threshold,
            excerpts,
            skipped,
            micro,
            macro_,
            per_class,
        }
    }

    pub fn counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for (i, m) in self.per_class.iter().enumerate() {
            c.tp[i] = m.tp;
            c.fp[i] = m.fp;
            c.fn_[i] = m.fn_;
        }
        c
    }

    /// Every (P, R, F1) triple in the report, micro first.
    pub fn triples(&self) -> Vec<Prf> {
        let mut v = vec![self.micro];
        v.extend(self.per_class.iter().map(|m| m.metrics));
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "strategy {}  threshold {:.2}  excerpts {}  skipped {}",
            self.strategy, self.threshold, self.excerpts, self.skipped
        );
        let _ = writeln!(out, "{:<7}{:>6}{:>6}{:>6}{:>11}{:>9}{:>9}", "class", "tp", "fp", "fn", "precision", "recall", "f1");
        let row = |out: &mut String, name: &str, tp: String, fp: String, fn_: String, m: &Prf| {
            let _ = writeln!(
                out,
                "{name:<7}{tp:>6}{fp:>6}{fn_:>6}{:>11.3}{:>9.3}{:>9.3}",
                m.precision, m.recall, m.f1
            );
        };
        for m in &self.per_class {
            row(&mut out, m.label.abbreviation(), m.tp.to_string(), m.fp.to_string(), m.fn_.to_string(), &m.metrics);
        }
        let c = self.counts();
        let sum = |a: [u64; NUM_CLASSES]| a.iter().sum::<u64>().to_string();
        row(&mut out, "micro", sum(c.tp), sum(c.fp), sum(c.fn_), &self.micro);
        row(&mut out, "macro", String::new(), String::new(), String::new(), &self.macro_);
        out
    }
}

/// Window predictions for every readable test excerpt, so that several
/// thresholds can be scored without re-running the model.
#[derive(Debug, Clone)]
pub struct PredictionCache {
    pub items: Vec<CachedExcerpt>,
    pub skipped: Vec<(PathBuf, String)>,
}

#[derive(Debug, Clone)]
pub struct CachedExcerpt {
    pub path: PathBuf,
    pub annotated: Vec<usize>,
    pub predictions: WindowPredictions,
}

/// Decodes and predicts every excerpt; unreadable ones are recorded and
/// skipped.
pub fn predict_testset(model: &Model, testset: &[LabeledExcerpt]) -> Result<PredictionCache, EvalError> {
    if testset.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let config = MelConfig::default();
    let mut items = Vec::with_capacity(testset.len());
    let mut skipped = Vec::new();
    for e in testset {
        let mel = match preprocess(&e.audio_path, &config) {
            Ok(m) => m,
            Err(err) => {
                skipped.push((e.audio_path.clone(), err.to_string()));
                continue;
            }
        };
        let predictions = match predict_excerpt(model, &mel) {
            Ok(p) => p,
            Err(AggregateError::TooShort { frames, window }) => {
                skipped.push((e.audio_path.clone(), format!("{frames} frames < {window}-frame window")));
                continue;
            }
            Err(other) => return Err(other.into()),
        };
        items.push(CachedExcerpt {
            path: e.audio_path.clone(),
            annotated: e.label_indices(),
            predictions,
        });
    }
    if items.is_empty() {
        return Err(EvalError::NothingEvaluated(skipped.len()));
    }
    Ok(PredictionCache { items, skipped })
}

/// Scores cached predictions at one threshold.
pub fn evaluate_cached(cache: &PredictionCache, strategy: Strategy, theta: f64) -> Result<EvalReport, EvalError> {
    validate_threshold(theta)?;
    let mut counts = ClassCounts::default();
    for item in &cache.items {
        let predicted = threshold_labels(&aggregate(&item.predictions, strategy), theta);
        counts.add(&predicted, &item.annotated)?;
    }
    Ok(EvalReport::from_counts(
        &counts,
        strategy,
        theta,
        cache.items.len(),
        cache.skipped.len(),
    ))
}

pub fn evaluate_testset(
    model: &Model,
    testset: &[LabeledExcerpt],
    strategy: Strategy,
    theta: f64,
) -> Result<EvalReport, EvalError> {
    validate_threshold(theta)?;
    evaluate_cached(&predict_testset(model, testset)?, strategy, theta)
}

/// One report per threshold of the strategy's grid.
pub fn sweep(cache: &PredictionCache, strategy: Strategy) -> Result<Vec<EvalReport>, EvalError> {
    strategy
        .threshold_grid()
        .into_iter()
        .map(|theta| evaluate_cached(cache, strategy, theta))
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "theta,micro_p,micro_r,micro_f1,macro_p,macro_r,macro_f1";

pub fn sweep_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.threshold, r.micro.precision, r.micro.recall, r.micro.f1, r.macro_.precision, r.macro_.recall, r.macro_.f1
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample (n − 1) standard deviation.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub micro_precision: MeanStd,
    pub micro_recall: MeanStd,
    pub micro_f1: MeanStd,
    pub macro_precision: MeanStd,
    pub macro_recall: MeanStd,
    pub macro_f1: MeanStd,
}

pub fn summarize_runs(reports: &[EvalReport], seeds: &[u64]) -> Result<RunSummary, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFewRuns(reports.len()));
    }
    let col = |f: fn(&EvalReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(RunSummary {
        runs: reports.len(),
        seeds: seeds.to_vec(),
        micro_precision: col(|r| r.micro.precision),
        micro_recall: col(|r| r.micro.recall),
        micro_f1: col(|r| r.micro.f1),
        macro_precision: col(|r| r.macro_.precision),
        macro_recall: col(|r| r.macro_.recall),
        macro_f1: col(|r| r.macro_.f1),
    })
}

/// Seed of run `index` derived from the base seed.
pub fn run_seed(base: u64, index: usize) -> u64 {
    crate::rng::derive_seed(base, &[0x5255_4e53, index as u64])
}

/// A multi-run experiment that stopped early; completed reports are kept.
#[derive(Debug)]
pub struct RepeatFailure<E> {
    pub completed: Vec<EvalReport>,
    pub failed_run: usize,
    pub error: E,
}

/// Calls `run(index, seed)` for `n_runs` derived seeds and summarizes.
pub fn repeat_runs<E>(
    n_runs: usize,
    base_seed: u64,
    mut run: impl FnMut(usize, u64) -> Result<EvalReport, E>,
) -> Result<(Vec<EvalReport>, RunSummary), RepeatFailure<E>>
where
    E: From<EvalError>,
{
    if n_runs < 2 {
        return Err(RepeatFailure {
            completed: Vec::new(),
            failed_run: 0,
            error: EvalError::TooFewRuns(n_runs).into(),
        });
    }
    let seeds: Vec<u64> = (0..n_runs).map(|i| run_seed(base_seed, i)).collect();
    let mut completed = Vec::with_capacity(n_runs);
    for (i, &seed) in seeds.iter().enumerate() {
        match run(i, seed) {
            Ok(r) => completed.push(r),
            Err(error) => {
                return Err(RepeatFailure {
                    completed,
                    failed_run: i,
                    error,
                })
            }
        }
    }
    let summary = summarize_runs(&completed, &seeds).map_err(|e| RepeatFailure {
        completed: completed.clone(),
        failed_run: n_runs,
        error: e.into(),
    })?;
    Ok((completed, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_match_counts_one_true_positive() {
        let c = accumulate(&[10], &[10], ClassCounts::default()).unwrap();
        assert_eq!(c.tp[10], 1);
        assert_eq!(c.tp.iter().sum::<u64>() + c.fp.iter().sum::<u64>() + c.fn_.iter().sum::<u64>(), 1);
        let c = accumulate(&[6], &[10], ClassCounts::default()).unwrap();
        assert_eq!((c.fp[6], c.fn_[10]), (1, 1));
        assert!(matches!(accumulate(&[11], &[], ClassCounts::default()), Err(EvalError::UnknownLabel(11))));
    }

    #[test]
    fn all_zero_counts_give_zero_metrics() {
        let (micro, macro_, per_class) = micro_macro(&ClassCounts::default());
        for m in [micro, macro_].iter().chain(per_class.iter().map(|c| &c.metrics)) {
            assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let s = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]).std, 0.0);
    }

    #[test]
    fn repeat_runs_keeps_partial_results() {
        let report = |v: f64| EvalReport {
            strategy: Strategy::S2,
            threshold: 0.5,
            excerpts: 1,
            skipped: 0,
            micro: Prf::from_pr(v, v),
            macro_: Prf::from_pr(v, v),
            per_class: vec![],
        };
        let out: Result<_, RepeatFailure<EvalError>> =
            repeat_runs(3, 1, |i, _| if i < 2 { Ok(report(0.5)) } else { Err(EvalError::EmptyTestSet) });
        let failure = out.unwrap_err();
        assert_eq!((failure.completed.len(), failure.failed_run), (2, 2));

        let mut seen = Vec::new();
        let (reports, summary) = repeat_runs::<EvalError>(3, 1, |i, s| {
            seen.push(s);
            Ok(report(0.1 * (i + 1) as f64))
        })
        .unwrap();
        assert_eq!(reports.len(), 3);
        assert_eq!(summary.seeds, seen);
        assert!((summary.micro_f1.mean - 0.2).abs() < 1e-12);
        assert!((summary.micro_f1.std - 0.1).abs() < 1e-12);
        assert_eq!(seen.iter().collect::<std::collections::BTreeSet<_>>().len(), 3);
    }
}
