//! Run configuration: command-line flags over an optional TOML file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use fcn_selaug::pipeline::{ExperimentConfig, ValidationSource};
use serde::Deserialize;

use crate::args::{ExperimentArgs, Format, OutputArgs};
use crate::UsageError;

pub const DEFAULT_OUT: &str = "runs";

/// Every key is optional. Relative paths resolve against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub fraction: Option<f64>,
    pub val: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub no_timestamp: Option<bool>,
    pub alpha: Option<f64>,
    pub alphas: Option<String>,
    pub share_initial: Option<bool>,
    pub initial_lr: Option<f64>,
    pub min_lr: Option<f64>,
    pub plateau_factor: Option<f64>,
    pub plateau_patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub shuffle: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid config file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.train, &mut cfg.test, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub format: Format,
    pub timestamp: bool,
}

impl Output {
    pub fn resolve(args: &OutputArgs, file: &FileConfig) -> Self {
        Self {
            dir: args
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            format: args.format.or(file.format).unwrap_or(Format::Json),
            timestamp: !(args.no_timestamp || file.no_timestamp.unwrap_or(false)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub experiment: ExperimentConfig,
    pub output: Output,
    pub progress: Option<usize>,
    pub alpha: Option<f64>,
    pub alphas: Option<String>,
}

pub fn existing_file(path: &Path, what: &str) -> Result<(), UsageError> {
    match std::fs::metadata(path) {
        Ok(m) if m.is_file() => Ok(()),
        Ok(_) => Err(UsageError(format!("{what} {} is not a file", path.display()))),
        Err(e) => Err(UsageError(format!("cannot read {what} {}: {e}", path.display()))),
    }
}

pub fn check_alpha(alpha: f64) -> Result<(), UsageError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(UsageError(format!("--alpha {alpha} is outside [0, 1]")))
    }
}

impl RunConfig {
    pub fn resolve(args: &ExperimentArgs, share_initial: bool) -> Result<Self, UsageError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let train = args
            .train
            .clone()
            .or_else(|| file.train.clone())
            .ok_or_else(|| UsageError("--train is required".into()))?;
        let test = args
            .test
            .clone()
            .or_else(|| file.test.clone())
            .ok_or_else(|| UsageError("--test is required".into()))?;
        existing_file(&train, "training set")?;
        existing_file(&test, "test set")?;

        let mut exp = ExperimentConfig::default();
        let t = &mut exp.train;
        t.seed = args.seed.or(file.seed).unwrap_or(t.seed);
        t.epochs = args.epochs.or(file.epochs).unwrap_or(t.epochs);
        t.batch_size = args.batch_size.or(file.batch_size).unwrap_or(t.batch_size);
        t.initial_lr = file.initial_lr.unwrap_or(t.initial_lr);
        t.min_lr = file.min_lr.unwrap_or(t.min_lr);
        t.plateau_factor = file.plateau_factor.unwrap_or(t.plateau_factor);
        t.plateau_patience = file.plateau_patience.unwrap_or(t.plateau_patience);
        t.min_delta = file.min_delta.unwrap_or(t.min_delta);
        t.shuffle = file.shuffle.unwrap_or(t.shuffle);
        exp.window_fraction = args.fraction.or(file.fraction).unwrap_or(exp.window_fraction);
        if let Some(v) = args.val.as_deref().or(file.val.as_deref()) {
            exp.validation = ValidationSource::parse(v).map_err(|e| UsageError(format!("--val: {e}")))?;
        }
        exp.share_initial_model = share_initial || file.share_initial.unwrap_or(false);
        exp.validate().map_err(|e| UsageError(e.to_string()))?;

        Ok(Self {
            train,
            test,
            experiment: exp,
            output: Output::resolve(&args.output, &file),
            progress: args.progress,
            alpha: file.alpha,
            alphas: file.alphas,
        })
    }
}
