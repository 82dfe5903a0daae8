//! Baseline and selective-augmentation experiments, and the threshold sweep.
//!
//! Selective run, per threshold:
//! 1. train an initial model on the training set;
//! 2. predict every probe (`test_a`) sample with the restored best model;
//! 3. keep samples whose margin `α = |p0 − p1|` is strictly below the
//!    threshold, regardless of whether the prediction was right;
//! 4. slice a random window of each kept sample, twice;
//! 5. upsample each window back to full length with a cubic spline and
//!    z-normalize it, keeping the sample's true label;
//! 6. append the augmented series to the training set;
//! 7. retrain from a fresh initialization on the expanded set;
//! 8. evaluate the retrained best model on `test_b`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_all, Augmented, DEFAULT_WINDOW_FRACTION, PASSES_PER_SAMPLE};
use crate::data::{preprocess, split_test, Dataset};
use crate::error::{Error, Result};
use crate::nn::{FcnParams, PredictionDist};
use crate::par;
use crate::rng::{derive_seed, RngStream};
use crate::train::{evaluate, train_with_progress, EpochRecord, Evaluation, TrainConfig, TrainedModel};

/// Where the per-epoch validation loss (checkpointing and plateau monitor)
/// comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValidationSource {
    /// The probe half of the test set.
    TestA,
    /// A seeded random fraction held out from the training set.
    Holdout { fraction: f64 },
}

impl ValidationSource {
    /// Parses `testa` or `holdout:<fraction>`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "testa" {
            return Ok(Self::TestA);
        }
        if let Some(f) = s.strip_prefix("holdout:") {
            let fraction: f64 = f
                .parse()
                .map_err(|_| Error::param(format!("bad holdout fraction {f:?}")))?;
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::param(format!("holdout fraction {fraction} outside (0, 1)")));
            }
            return Ok(Self::Holdout { fraction });
        }
        Err(Error::param(format!(
            "validation source must be `testa` or `holdout:<fraction>`, got {s:?}"
        )))
    }
}

impl std::fmt::Display for ValidationSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TestA => f.write_str("testa"),
            Self::Holdout { fraction } => write!(f, "holdout:{fraction}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub window_fraction: f64,
    pub validation: ValidationSource,
    /// Sweep only: reuse the baseline model as every row's initial model
    /// instead of training a new one per row.
    pub share_initial_model: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            window_fraction: DEFAULT_WINDOW_FRACTION,
            validation: ValidationSource::TestA,
            share_initial_model: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(Error::param(format!(
                "window fraction {} outside (0, 1]",
                self.window_fraction
            )));
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.train.seed = seed;
        c
    }
}

/// Preprocessed training set plus the two halves of the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test_a: Dataset,
    pub test_b: Dataset,
}

impl ExperimentData {
    /// Remaps labels, z-normalizes every series and splits the test set into
    /// its first half (`test_a`) and second half (`test_b`).
    pub fn prepare(train: Dataset, test: Dataset) -> Result<Self> {
        let (train, _) = preprocess(train)?;
        let (test, _) = preprocess(test)?;
        if train.series_len() != test.series_len() {
            return Err(Error::shape(format!(
                "training series have {} points, test series {}",
                train.series_len(),
                test.series_len()
            )));
        }
        let (test_a, test_b) = split_test(&test)?;
        Ok(Self { train, test_a, test_b })
    }
}

/// Returns `(training set, validation set)` for the configured source.
fn training_split(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<(Dataset, Dataset)> {
    match cfg.validation {
        ValidationSource::TestA => Ok((data.train.clone(), data.test_a.clone())),
        ValidationSource::Holdout { fraction } => {
            let n = data.train.len();
            let held = ((fraction * n as f64).ceil() as usize).clamp(1, n.saturating_sub(1));
            if n < 2 {
                return Err(Error::param("holdout needs at least two training samples"));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut RngStream::new(cfg.train.seed, "holdout"));
            let (val_idx, train_idx) = order.split_at(held);
            let mut train_idx = train_idx.to_vec();
            let mut val_idx = val_idx.to_vec();
            train_idx.sort_unstable();
            val_idx.sort_unstable();
            Ok((data.train.select(&train_idx)?, data.train.select(&val_idx)?))
        }
    }
}

// ---------------------------------------------------------------------------
// Selection

/// `|p0 − p1|` of a two-class distribution.
pub fn confidence_alpha(dist: &PredictionDist) -> Result<f64> {
    match dist.probs.as_slice() {
        [p0, p1] => Ok((p0 - p1).abs()),
        other => Err(Error::Unsupported(format!(
            "confidence margin needs 2 classes, got {}",
            other.len()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Positions in the probe set, increasing.
    pub indices: Vec<usize>,
    pub alphas: Vec<f64>,
    pub threshold: f64,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::param(format!("alpha threshold {threshold} outside [0, 1]")))
    }
}

/// Margin of every probe sample under `params` (inference mode).
pub fn probe_alphas(params: &FcnParams, probe: &Dataset) -> Result<Vec<f64>> {
    params.predict(probe)?.iter().map(confidence_alpha).collect()
}

/// Keeps the positions whose margin is strictly below `threshold`.
pub fn select_by_threshold(alphas: &[f64], threshold: f64) -> Result<SelectionResult> {
    check_threshold(threshold)?;
    let (indices, alphas) = alphas
        .iter()
        .enumerate()
        .filter(|(_, &a)| a < threshold)
        .map(|(i, &a)| (i, a))
        .unzip();
    Ok(SelectionResult {
        indices,
        alphas,
        threshold,
    })
}

pub fn select_low_confidence(params: &FcnParams, probe: &Dataset, threshold: f64) -> Result<SelectionResult> {
    check_threshold(threshold)?;
    select_by_threshold(&probe_alphas(params, probe)?, threshold)
}

/// Two augmented series per selected probe sample, drawn from the run's
/// `window` stream.
pub fn augment_selected(
    probe: &Dataset,
    selection: &SelectionResult,
    fraction: f64,
    seed: u64,
) -> Result<Vec<Augmented>> {
    if selection.is_empty() {
        return Ok(Vec::new());
    }
    let selected = probe.select(&selection.indices)?;
    augment_all(&selected, fraction, &RngStream::new(seed, "window"))
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Baseline,
    Selective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: RunMode,
    pub alpha_threshold: Option<f64>,
    pub selected_count: usize,
    pub augmented_count: usize,
    pub train_size_final: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub seed: u64,
    pub best_epoch: usize,
    pub config: ExperimentConfig,
}

/// Hook for per-epoch progress; `phase` names the training run.
pub trait Progress: Sync {
    fn epoch(&self, _phase: &str, _record: &EpochRecord) {}
}

/// Ignores all progress events.
pub struct Silent;

impl Progress for Silent {}

fn train_phase(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
    label: &str,
    progress: &dyn Progress,
) -> Result<TrainedModel> {
    let phase = format!("{label}/seed {}", cfg.train.seed);
    train_with_progress(&cfg.train, train, val, &RngStream::new(cfg.train.seed, label), |r| {
        progress.epoch(&phase, r)
    })
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub report: ExperimentReport,
    pub model: TrainedModel,
}

/// Trains on the untouched training set and evaluates the restored best
/// model on `test_b`.
pub fn run_baseline(cfg: &ExperimentConfig, data: &ExperimentData, progress: &dyn Progress) -> Result<BaselineOutcome> {
    cfg.validate()?;
    let (train, val) = training_split(cfg, data)?;
    let model = train_phase(cfg, &train, &val, "initial", progress)?;
    let eval = evaluate(&model.params, &data.test_b)?;
    Ok(BaselineOutcome {
        report: ExperimentReport {
            mode: RunMode::Baseline,
            alpha_threshold: None,
            selected_count: 0,
            augmented_count: 0,
            train_size_final: train.len(),
            accuracy: eval.accuracy,
            loss: eval.loss,
            seed: cfg.train.seed,
            best_epoch: model.best_epoch,
            config: cfg.clone(),
        },
        model,
    })
}

#[derive(Debug, Clone)]
pub struct SelectiveOutcome {
    pub report: ExperimentReport,
    /// Step-1 model, before augmentation.
    pub initial: TrainedModel,
    /// Step-1 model evaluated on `test_b`.
    pub initial_eval: Evaluation,
    pub selection: SelectionResult,
    /// Two per selected sample, in selection order.
    pub augmented: Vec<Augmented>,
    pub expanded_train: Dataset,
    pub model: TrainedModel,
}

/// Steps 2–8, starting from an already trained initial model.
pub fn run_selective_from(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    threshold: f64,
    initial: TrainedModel,
    progress: &dyn Progress,
) -> Result<SelectiveOutcome> {
    cfg.validate()?;
    check_threshold(threshold)?;
    let (train, val) = training_split(cfg, data)?;
    let initial_eval = evaluate(&initial.params, &data.test_b)?;
    let selection = select_low_confidence(&initial.params, &data.test_a, threshold)?;
    let augmented = augment_selected(&data.test_a, &selection, cfg.window_fraction, cfg.train.seed)?;
    let expanded_train = train.extended(augmented.iter().map(|a| a.sample.clone()))?;
    let model = train_phase(cfg, &expanded_train, &val, "retrain", progress)?;
    let eval = evaluate(&model.params, &data.test_b)?;
    debug_assert_eq!(augmented.len(), PASSES_PER_SAMPLE * selection.len());
    Ok(SelectiveOutcome {
        report: ExperimentReport {
            mode: RunMode::Selective,
            alpha_threshold: Some(threshold),
            selected_count: selection.len(),
            augmented_count: augmented.len(),
            train_size_final: expanded_train.len(),
            accuracy: eval.accuracy,
            loss: eval.loss,
            seed: cfg.train.seed,
            best_epoch: model.best_epoch,
            config: cfg.clone(),
        },
        initial,
        initial_eval,
        selection,
        augmented,
        expanded_train,
        model,
    })
}

/// Full selective pipeline. The initial model is trained exactly as
/// [`run_baseline`] would with the same seed.
pub fn run_selective(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    threshold: f64,
    progress: &dyn Progress,
) -> Result<SelectiveOutcome> {
    cfg.validate()?;
    check_threshold(threshold)?;
    let (train, val) = training_split(cfg, data)?;
    let initial = train_phase(cfg, &train, &val, "initial", progress)?;
    run_selective_from(cfg, data, threshold, initial, progress)
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub baseline: ExperimentReport,
    /// One report per threshold, in input order.
    pub rows: Vec<ExperimentReport>,
    /// Selection counts for every threshold on the baseline model's probe
    /// margins.
    pub baseline_selection_counts: Vec<usize>,
}

impl SweepOutcome {
    /// Baseline first, then the selective rows.
    pub fn reports(&self) -> impl Iterator<Item = &ExperimentReport> {
        std::iter::once(&self.baseline).chain(&self.rows)
    }
}

/// Seed for sweep row `index` (0-based).
pub fn row_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, index as u64 + 1)
}

/// One baseline plus one independently built selective model per threshold.
/// Row `i` runs with seed [`row_seed`]`(base, i)`; rows may run in parallel.
pub fn sweep(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    thresholds: &[f64],
    progress: &dyn Progress,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    if thresholds.is_empty() {
        return Err(Error::param("sweep needs at least one alpha threshold"));
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let baseline = run_baseline(cfg, data, progress)?;
    let alphas = probe_alphas(&baseline.model.params, &data.test_a)?;
    let baseline_selection_counts = thresholds
        .iter()
        .map(|&t| select_by_threshold(&alphas, t).map(|s| s.len()))
        .collect::<Result<Vec<_>>>()?;

    let rows = par::map_indexed(thresholds.len(), |i| {
        let row_cfg = cfg.with_seed(row_seed(cfg.train.seed, i));
        let outcome = if cfg.share_initial_model {
            run_selective_from(&row_cfg, data, thresholds[i], baseline.model.clone(), progress)
        } else {
            run_selective(&row_cfg, data, thresholds[i], progress)
        };
        outcome.map(|o| o.report)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Ok(SweepOutcome {
        baseline: baseline.report,
        rows,
        baseline_selection_counts,
    })
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_thresholds(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::param(format!("cannot parse alpha list {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(bad());
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    for &v in &values {
        check_threshold(v)?;
    }
    Ok(values)
}
