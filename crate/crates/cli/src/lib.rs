//! Command-line driver for the instrument recognition pipeline.

pub mod commands;
pub mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

pub use commands::run;
pub use config::{default_config, Command, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "instrumentnet", version, about = "Predominant instrument recognition")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus root (train/ and test/), or a WAV file for predict and dump-activations.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    /// 0.5, 1.0, 1.5 or 3.0.
    #[arg(long)]
    pub window_seconds: Option<String>,
    /// tanh, relu, prelu or lrelu.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub lrelu_alpha: Option<String>,
    /// binary, normalized or literal.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub validation_fraction: Option<String>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<String>,
    /// s1 or s2.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub theta: Option<String>,
    /// Falls back to INSTRUMENTNET_SEED, then 0.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub runs: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<String>,
    /// Synthetic corpus: number of classes.
    #[arg(long)]
    pub classes: Option<String>,
    /// Synthetic corpus: training excerpts per class.
    #[arg(long)]
    pub per_class: Option<String>,
    /// Synthetic corpus: number of test excerpts.
    #[arg(long)]
    pub test_excerpts: Option<String>,
}

impl Cli {
    /// Flags that were given, keyed like the config file.
    pub fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("dataset", &self.dataset),
            ("model", &self.model),
            ("out", &self.out),
            ("window-seconds", &self.window_seconds),
            ("activation", &self.activation),
            ("lrelu-alpha", &self.lrelu_alpha),
            ("loss", &self.loss),
            ("learning-rate", &self.learning_rate),
            ("batch-size", &self.batch_size),
            ("validation-fraction", &self.validation_fraction),
            ("patience", &self.patience),
            ("max-epochs", &self.max_epochs),
            ("strategy", &self.strategy),
            ("theta", &self.theta),
            ("seed", &self.seed),
            ("runs", &self.runs),
            ("threads", &self.threads),
            ("classes", &self.classes),
            ("per-class", &self.per_class),
            ("test-excerpts", &self.test_excerpts),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => config::read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let env_seed = std::env::var(config::SEED_ENV).ok();
        RunConfig::resolve(self.command, &file, &self.flags(), env_seed.as_deref())
    }
}

/// Parses `args`, resolves the configuration and runs the command.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    run(&cli.resolve()?)
}
