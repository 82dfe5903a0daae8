use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "fcn-selaug",
    version,
    about = "FCN time-series classification with confidence-selective augmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the training set and evaluate on the second half of the test set.
    Baseline(ExperimentArgs),
    /// Train, augment low-confidence probe samples, retrain and evaluate.
    Selective {
        #[command(flatten)]
        common: ExperimentArgs,
        /// Margin threshold; probe samples with |p0 - p1| below it are augmented.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Baseline plus one selective model per threshold.
    Sweep {
        #[command(flatten)]
        common: ExperimentArgs,
        /// `start:stop:step` (inclusive) or a comma-separated list.
        #[arg(long)]
        alphas: Option<String>,
        /// Reuse the baseline model as every row's initial model.
        #[arg(long)]
        share_initial: bool,
        /// Skip the SVG charts.
        #[arg(long)]
        no_svg: bool,
    },
    /// Select and augment probe samples with a saved model, without retraining.
    Augment(AugmentArgs),
    /// Evaluate a saved model on a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Which part of a dataset file to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    /// Every sample.
    All,
    /// First half.
    A,
    /// Second half.
    B,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Leave the timestamp out of report documents.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// TOML file with defaults for any of these options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training set, UCR text format.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test set, UCR text format; split into probe and evaluation halves.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Window length as a fraction of the series length.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Validation source: `testa` or `holdout:<fraction>`.
    #[arg(long)]
    pub val: Option<String>,
    /// Print a progress line every N epochs to stderr.
    #[arg(long, value_name = "N")]
    pub progress: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset to probe, UCR text format.
    #[arg(long)]
    pub probe: PathBuf,
    #[arg(long, value_enum, default_value = "a")]
    pub part: Part,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = fcn_selaug::augment::DEFAULT_WINDOW_FRACTION)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset to evaluate, UCR text format.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "b")]
    pub part: Part,
    #[command(flatten)]
    pub output: OutputArgs,
}
