//! Run configuration: defaults, `key = value` files and flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use instrumentnet::dataset::SynthSpec;
use instrumentnet::tensor::{ActivationKind, CrossEntropy};
use instrumentnet::{Strategy, TrainingConfig};

pub const SEED_ENV: &str = "INSTRUMENTNET_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Preprocess,
    Synth,
    Train,
    Predict,
    Evaluate,
    Sweep,
    DumpActivations,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

/// Everything one command needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub training: TrainingConfig,
    pub strategy: Strategy,
    pub theta: f64,
    pub runs: usize,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub classes: usize,
    pub per_class: usize,
    pub test_excerpts: usize,
}

/// Leaky ReLU (0.33), 1.0 s windows, S2 at θ = 0.50 and the standard
/// training constants.
pub fn default_config(command: Command) -> RunConfig {
    RunConfig {
        command,
        dataset: None,
        model: None,
        out: PathBuf::from("out"),
        training: TrainingConfig::default(),
        strategy: Strategy::S2,
        theta: 0.5,
        runs: 1,
        threads: 0,
        classes: 6,
        per_class: 60,
        test_excerpts: 60,
    }
}

/// Keys accepted in config files, in snapshot order. Each mirrors a flag.
pub const KEYS: [&str; 20] = [
    "dataset",
    "model",
    "out",
    "window-seconds",
    "activation",
    "lrelu-alpha",
    "loss",
    "learning-rate",
    "batch-size",
    "validation-fraction",
    "patience",
    "max-epochs",
    "strategy",
    "theta",
    "seed",
    "runs",
    "threads",
    "classes",
    "per-class",
    "test-excerpts",
];

/// Reads a flat `key = value` file. Blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", n + 1))?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key '{key}'", n + 1);
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config_text(&text).with_context(|| format!("in {}", path.display()))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| anyhow!("{key}: invalid value '{value}': {e}"))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.training;
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "model" => self.model = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "window-seconds" => t.window_seconds = parse(key, value)?,
            "activation" => {
                let alpha = match t.activation {
                    ActivationKind::LeakyRelu { alpha } => alpha,
                    _ => 0.33,
                };
                t.activation = match value.trim().to_ascii_lowercase().as_str() {
                    "lrelu" => ActivationKind::leaky(alpha)?,
                    "tanh" | "relu" | "prelu" => value.parse().map_err(|e: String| anyhow!(e))?,
                    other => bail!("activation: expected tanh, relu, prelu or lrelu, got '{other}'"),
                };
            }
            "lrelu-alpha" => {
                let alpha: f64 = parse(key, value)?;
                ActivationKind::leaky(alpha)?;
                if let ActivationKind::LeakyRelu { alpha: a } = &mut t.activation {
                    *a = alpha;
                }
            }
            "loss" => t.loss = value.parse::<CrossEntropy>().map_err(|e| anyhow!("loss: {e}"))?,
            "learning-rate" => t.learning_rate = parse(key, value)?,
            "batch-size" => t.batch_size = parse(key, value)?,
            "validation-fraction" => t.validation_fraction = parse(key, value)?,
            "patience" => t.patience_epochs = parse(key, value)?,
            "max-epochs" => t.max_epochs = parse(key, value)?,
            "strategy" => self.strategy = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "per-class" => self.per_class = parse(key, value)?,
            "test-excerpts" => self.test_excerpts = parse(key, value)?,
            other => bail!("unknown setting '{other}'"),
        }
        Ok(())
    }

    /// Defaults, then the config file, then flags. The seed falls back to
    /// `INSTRUMENTNET_SEED` when neither file nor flags set it.
    pub fn resolve(
        command: Command,
        file: &BTreeMap<String, String>,
        flags: &BTreeMap<String, String>,
        env_seed: Option<&str>,
    ) -> Result<Self> {
        let mut config = default_config(command);
        // Activation before its slope, whichever source each comes from.
        let mut merged: Vec<(&String, &String)> = file.iter().filter(|(k, _)| !flags.contains_key(*k)).collect();
        merged.extend(flags.iter());
        merged.sort_by_key(|(k, _)| KEYS.iter().position(|x| x == k).unwrap_or(usize::MAX));
        if !merged.iter().any(|(k, _)| k.as_str() == "seed") {
            if let Some(seed) = env_seed {
                config.set("seed", seed).context(SEED_ENV)?;
            }
        }
        for (k, v) in merged {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        instrumentnet::aggregator::validate_threshold(self.theta)?;
        if self.runs == 0 {
            bail!("runs must be at least 1");
        }
        Ok(())
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec::new(self.classes, self.per_class, self.test_excerpts, self.training.seed)
    }

    /// Every setting as `key = value`, readable back through `--config`.
    pub fn snapshot(&self) -> String {
        let t = &self.training;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let (activation, alpha) = match t.activation {
            ActivationKind::LeakyRelu { alpha } => ("lrelu".to_string(), Some(alpha)),
            other => (other.to_string(), None),
        };
        let values: [Option<String>; 20] = [
            path(&self.dataset),
            path(&self.model),
            Some(self.out.display().to_string()),
            Some(t.window_seconds.to_string()),
            Some(activation),
            alpha.map(|a| a.to_string()),
            Some(t.loss.name().to_string()),
            Some(t.learning_rate.to_string()),
            Some(t.batch_size.to_string()),
            Some(t.validation_fraction.to_string()),
            Some(t.patience_epochs.to_string()),
            Some(t.max_epochs.to_string()),
            Some(self.strategy.to_string()),
            Some(self.theta.to_string()),
            Some(t.seed.to_string()),
            Some(self.runs.to_string()),
            Some(self.threads.to_string()),
            Some(self.classes.to_string()),
            Some(self.per_class.to_string()),
            Some(self.test_excerpts.to_string()),
        ];
        let mut out = format!(
            "# instrumentnet {} {}\n# model format {}, mel cache format {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            instrumentnet::network::MODEL_FORMAT_VERSION,
            instrumentnet::dsp::MEL_CACHE_VERSION,
        );
        for (key, value) in KEYS.iter().zip(values) {
            if let Some(v) = value {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }
}
