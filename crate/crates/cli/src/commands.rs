//! The seven pipeline commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::{Array, IxDyn};
use ndarray_npy::write_npy;
use rayon::prelude::*;

use instrumentnet::aggregator::{classify, predict_excerpt, prediction_line};
use instrumentnet::dataset::{scan_testing, scan_training, synth_corpus, DatasetManifest, LabelParser, LabeledExcerpt, Split};
use instrumentnet::dsp::{preprocess, save_mel_cache, MelConfig};
use instrumentnet::evaluator::{
    evaluate_cached, predict_testset, repeat_runs, run_seed, sweep, sweep_csv, EvalReport, PredictionCache,
};
use instrumentnet::network::{load_model, mel_to_input, save_model};
use instrumentnet::rng;
use instrumentnet::trainer::{slice_excerpt, train_with_log, LabeledChunk, TrainReport};
use instrumentnet::Model;

use crate::config::{Command, RunConfig};

pub const MODEL_FILE: &str = "model.icnn";

/// Runs `config.command` on a pool of `config.threads` workers.
pub fn run(config: &RunConfig) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if config.threads > 0 {
        pool = pool.num_threads(config.threads);
    }
    let pool = pool.build().context("building thread pool")?;
    pool.install(|| {
        fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
        fs::write(config.out.join(format!("{}.config", config.command)), config.snapshot())
            .context("writing config snapshot")?;
        match config.command {
            Command::Preprocess => run_preprocess(config),
            Command::Synth => run_synth(config),
            Command::Train => run_train(config),
            Command::Predict => run_predict(config),
            Command::Evaluate => run_evaluate(config),
            Command::Sweep => run_sweep(config),
            Command::DumpActivations => run_dump(config),
        }
    })
}

fn dataset(config: &RunConfig) -> Result<&Path> {
    config.dataset.as_deref().context("missing --dataset")
}

fn model_path(config: &RunConfig) -> Result<&Path> {
    config.model.as_deref().context("missing --model")
}

/// `<root>/<split>` when present, otherwise the root itself.
fn split_root(root: &Path, split: Split) -> PathBuf {
    let sub = root.join(split.to_string());
    if sub.is_dir() {
        sub
    } else {
        root.to_path_buf()
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run_preprocess(config: &RunConfig) -> Result<()> {
    let root = dataset(config)?;
    let parser = LabelParser::default();
    let mel_config = MelConfig::default();
    let mut found = false;
    for split in [Split::Train, Split::Test] {
        let dir = root.join(split.to_string());
        if !dir.is_dir() {
            continue;
        }
        found = true;
        let manifest = match split {
            Split::Train => scan_training(&dir, &parser)?,
            Split::Test => scan_testing(&dir, &parser)?,
        };
        let target = config.out.join("mel").join(split.to_string());
        manifest.excerpts.par_iter().try_for_each(|e| -> Result<()> {
            let rel = e.audio_path.strip_prefix(&dir).unwrap_or(&e.audio_path);
            let dest = target.join(rel).with_extension("mel");
            fs::create_dir_all(dest.parent().expect("file has a parent"))?;
            let mel = preprocess(&e.audio_path, &mel_config).with_context(|| e.audio_path.display().to_string())?;
            save_mel_cache(&mel, &dest)?;
            Ok(())
        })?;
        write(&config.out.join(format!("{split}.jsonl")), manifest.to_json_lines())?;
        eprintln!("{split}: {} excerpts, counts {:?}", manifest.len(), manifest.counts());
    }
    if !found {
        bail!("{} has neither a train/ nor a test/ directory", root.display());
    }
    Ok(())
}

fn run_synth(config: &RunConfig) -> Result<()> {
    let (train, test) = synth_corpus(&config.synth_spec(), &config.out)?;
    eprintln!("wrote {} and {}", train.display(), test.display());
    Ok(())
}

/// Decodes every training excerpt and cuts it into window-length chunks.
pub fn load_chunks(manifest: &DatasetManifest, window_seconds: f64) -> Result<Vec<LabeledChunk>> {
    let mel_config = MelConfig::default();
    let per_excerpt = manifest
        .excerpts
        .par_iter()
        .map(|e| -> Result<Vec<LabeledChunk>> {
            let mel = preprocess(&e.audio_path, &mel_config).with_context(|| e.audio_path.display().to_string())?;
            let label = e.labels[0].index();
            Ok(slice_excerpt(&mel, window_seconds)?
                .into_iter()
                .map(|mel| LabeledChunk { mel, label })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_excerpt.into_iter().flatten().collect())
}

fn train_one(chunks: &[LabeledChunk], config: &RunConfig, seed: u64, out: &Path) -> Result<TrainReport> {
    let training = instrumentnet::TrainingConfig { seed, ..config.training };
    let (mut model, report) = train_with_log(chunks, &training, |e| {
        eprintln!(
            "epoch {:>3}  train {:.4}  validation {:.4}",
            e.epoch, e.train_loss, e.validation_loss
        )
    })?;
    model.round_to_storage_precision();
    fs::create_dir_all(out)?;
    save_model(&model, out.join(MODEL_FILE))?;
    write(&out.join("train_report.json"), report.to_json())?;
    eprintln!(
        "best epoch {} (validation {:.4}), stopped at {}, {:.1} s",
        report.best_epoch,
        report.best_validation_loss,
        report.stopped_epoch,
        report.wall_time
    );
    Ok(report)
}

/// Output directory of run `i` when several runs are requested.
pub fn run_dir(out: &Path, runs: usize, i: usize) -> PathBuf {
    if runs == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("run_{i}"))
    }
}

fn run_seed_for(config: &RunConfig, i: usize) -> u64 {
    if config.runs == 1 {
        config.training.seed
    } else {
        run_seed(config.training.seed, i)
    }
}

fn run_train(config: &RunConfig) -> Result<()> {
    let root = split_root(dataset(config)?, Split::Train);
    let manifest = scan_training(&root, &LabelParser::default())?;
    let chunks = load_chunks(&manifest, config.training.window_seconds)?;
    eprintln!("{} excerpts, {} chunks", manifest.len(), chunks.len());
    for i in 0..config.runs {
        train_one(&chunks, config, run_seed_for(config, i), &run_dir(&config.out, config.runs, i))?;
    }
    Ok(())
}

fn test_manifest(config: &RunConfig) -> Result<DatasetManifest> {
    let root = split_root(dataset(config)?, Split::Test);
    Ok(scan_testing(&root, &LabelParser::default())?)
}

fn load(path: &Path) -> Result<Model> {
    load_model(path).with_context(|| format!("loading {}", path.display()))
}

/// The model of run `i`: `--model` itself for a single run, otherwise
/// `<model>/run_<i>/model.icnn`.
fn run_model(config: &RunConfig, i: usize) -> Result<PathBuf> {
    let base = model_path(config)?;
    Ok(if config.runs == 1 {
        base.to_path_buf()
    } else {
        run_dir(base, config.runs, i).join(MODEL_FILE)
    })
}

fn report_skips(cache: &PredictionCache) {
    for (path, why) in &cache.skipped {
        eprintln!("skipped {}: {why}", path.display());
    }
}

fn run_predict(config: &RunConfig) -> Result<()> {
    let model = load(model_path(config)?)?;
    let data = dataset(config)?;
    let excerpts = if data.is_file() {
        vec![LabeledExcerpt {
            audio_path: data.to_path_buf(),
            labels: Vec::new(),
            duration_seconds: 0.0,
        }]
    } else {
        test_manifest(config)?.excerpts
    };
    let mel_config = MelConfig::default();
    let mut lines = String::new();
    for e in &excerpts {
        let path = e.audio_path.display().to_string();
        let mel = preprocess(&e.audio_path, &mel_config).with_context(|| path.clone())?;
        let preds = predict_excerpt(&model, &mel).with_context(|| path.clone())?;
        lines.push_str(&prediction_line(&path, &classify(&preds, config.strategy, config.theta)));
        lines.push('\n');
    }
    write(&config.out.join("predictions.tsv"), lines)
}

fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(&dir.join("report.json"), report.to_json())?;
    write(&dir.join("report.txt"), report.to_text())
}

fn evaluate_one(config: &RunConfig, model: &Path, test: &[LabeledExcerpt], out: &Path) -> Result<EvalReport> {
    let cache = predict_testset(&load(model)?, test)?;
    report_skips(&cache);
    let report = evaluate_cached(&cache, config.strategy, config.theta)?;
    write_report(&report, out)?;
    Ok(report)
}

fn run_evaluate(config: &RunConfig) -> Result<()> {
    let test = test_manifest(config)?.excerpts;
    if config.runs == 1 {
        let report = evaluate_one(config, model_path(config)?, &test, &config.out)?;
        eprint!("{}", report.to_text());
        return Ok(());
    }
    let outcome = repeat_runs(config.runs, config.training.seed, |i, _| -> Result<EvalReport, anyhow::Error> {
        let model = run_model(config, i)?;
        evaluate_one(config, &model, &test, &run_dir(&config.out, config.runs, i))
    });
    match outcome {
        Ok((_, summary)) => write(
            &config.out.join("runs_summary.json"),
            serde_json::to_string_pretty(&summary)?,
        ),
        Err(failure) => {
            Err(failure.error).context(format!(
                "run {} failed; {} completed reports kept",
                failure.failed_run,
                failure.completed.len()
            ))
        }
    }
}

fn run_sweep(config: &RunConfig) -> Result<()> {
    let cache = predict_testset(&load(model_path(config)?)?, &test_manifest(config)?.excerpts)?;
    report_skips(&cache);
    let reports = sweep(&cache, config.strategy)?;
    write(&config.out.join(format!("sweep_{}.csv", config.strategy)), sweep_csv(&reports))
}

fn run_dump(config: &RunConfig) -> Result<()> {
    let model = load(model_path(config)?)?;
    let path = dataset(config)?;
    let mel = preprocess(path, &MelConfig::default()).with_context(|| path.display().to_string())?;
    let windows = instrumentnet::aggregator::sliding_windows(&mel, model.spec.input_frames)?;
    let traces = windows
        .iter()
        .map(|w| model.forward_trace(&mel_to_input(w), false, &mut rng::seeded(0)))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = config.out.join("activations");
    fs::create_dir_all(&dir)?;
    let blocks = traces[0].block_outputs.len();
    for b in 0..blocks {
        let mut shape = vec![traces.len()];
        shape.extend_from_slice(traces[0].block_outputs[b].shape());
        let values: Vec<f32> = traces
            .iter()
            .flat_map(|t| t.block_outputs[b].values().iter().map(|&v| v as f32))
            .collect();
        let array = Array::from_shape_vec(IxDyn(&shape), values)?;
        write_npy(dir.join(format!("block{}.npy", b + 1)), &array)?;
    }
    let probs: Vec<f32> = traces.iter().flat_map(|t| t.probabilities.iter().map(|&v| v as f32)).collect();
    write_npy(
        dir.join("probabilities.npy"),
        &Array::from_shape_vec(IxDyn(&[traces.len(), probs.len() / traces.len()]), probs)?,
    )?;
    eprintln!("{} windows, {} blocks written to {}", traces.len(), blocks, dir.display());
    Ok(())
}
