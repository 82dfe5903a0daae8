//! Mini-batch training: Adam, reduce-on-plateau learning-rate scheduling,
//! and best-by-validation-loss checkpointing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{batch_tensor, xent_loss, FcnConfig, FcnGrads, FcnParams, Tensor};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub min_delta: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            initial_lr: 1e-3,
            plateau_factor: 0.5,
            plateau_patience: 20,
            min_lr: 1e-4,
            min_delta: 1e-4,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::param(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail(format!("plateau factor {} outside (0, 1)", self.plateau_factor));
        }
        if !(self.initial_lr > 0.0 && self.min_lr > 0.0 && self.min_lr <= self.initial_lr) {
            return fail(format!(
                "need 0 < min_lr ({}) <= initial_lr ({})",
                self.min_lr, self.initial_lr
            ));
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return fail(format!("min_delta {} must be non-negative", self.min_delta));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Adam

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &FcnParams) -> Self {
        let zeros: Vec<Tensor> = params
            .learnable()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }

    /// One bias-corrected Adam update of every learnable tensor.
    pub fn step(&mut self, params: &mut FcnParams, grads: &FcnGrads, lr: f64) -> Result<()> {
        let named = grads.tensors();
        if named.len() != self.m.len() {
            return Err(Error::shape(format!(
                "{} gradient tensors for {} optimizer slots",
                named.len(),
                self.m.len()
            )));
        }
        for ((name, g), m) in named.iter().zip(&self.m) {
            g.expect_shape(name, m.shape())?;
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let gs = named.into_iter().map(|(_, g)| g);
        for (((p, g), m), v) in params
            .learnable_mut()
            .into_iter()
            .zip(gs)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            adam_update(
                p.data_mut(),
                g.data(),
                m.data_mut(),
                v.data_mut(),
                lr,
                b1,
                b2,
                eps,
                c1,
                c2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

// ---------------------------------------------------------------------------
// Plateau scheduler

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
    pub current_lr: f64,
}

impl PlateauState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            current_lr: cfg.initial_lr,
        }
    }

    /// Feeds one epoch's validation loss. Improvement means beating the best
    /// by more than `min_delta`; after `plateau_patience` epochs without one
    /// the rate is scaled by `plateau_factor`, floored at `min_lr`, and the
    /// counter restarts. Returns whether the rate was reduced.
    pub fn update(&mut self, val_loss: f64, cfg: &TrainConfig) -> bool {
        if val_loss < self.best_val_loss - cfg.min_delta {
            self.best_val_loss = val_loss;
            self.epochs_since_improvement = 0;
            return false;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement >= cfg.plateau_patience {
            self.epochs_since_improvement = 0;
            let reduced = (self.current_lr * cfg.plateau_factor).max(cfg.min_lr);
            let changed = reduced < self.current_lr;
            self.current_lr = reduced;
            return changed;
        }
        false
    }
}

/// Free-function form of [`PlateauState::update`].
pub fn plateau_update(mut state: PlateauState, val_loss: f64, cfg: &TrainConfig) -> PlateauState {
    state.update(val_loss, cfg);
    state
}

// ---------------------------------------------------------------------------
// Training loop

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches, in training mode (batch statistics).
    pub train_loss: f64,
    /// Fraction of training samples classified correctly by their batch's
    /// training-mode forward pass.
    #[serde(default)]
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used for this epoch's updates.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    /// Parameters restored from the best validation epoch.
    pub params: FcnParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    /// Per-epoch history as CSV.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy,lr\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.lr
            ));
        }
        out
    }
}

fn labels_of(data: &Dataset) -> Result<Vec<usize>> {
    data.labels()
        .map(|l| {
            if l >= 0 && (l as usize) < data.class_count() {
                Ok(l as usize)
            } else {
                Err(Error::Label {
                    label: l,
                    classes: data.class_count(),
                })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

const EVAL_CHUNK: usize = 64;

/// Rows of `logits` whose first maximal entry is the label.
fn count_correct(logits: &Tensor, labels: &[usize], k: usize) -> usize {
    logits
        .data()
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &label)| {
            let mut best = 0;
            for (i, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = i;
                }
            }
            best == label
        })
        .count()
}

/// Inference-mode accuracy and mean cross-entropy. Predictions take the most
/// probable class, ties going to class 0. Never touches `params`.
pub fn evaluate(params: &FcnParams, data: &Dataset) -> Result<Evaluation> {
    if data.series_len() != params.config.series_len {
        return Err(Error::shape(format!(
            "dataset series length {} does not match model length {}",
            data.series_len(),
            params.config.series_len
        )));
    }
    let labels = labels_of(data)?;
    let k = params.config.class_count;
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for (chunk, lab) in data.samples().chunks(EVAL_CHUNK).zip(labels.chunks(EVAL_CHUNK)) {
        let x = batch_tensor(chunk.iter().map(|s| s.values.as_slice()), data.series_len())?;
        let logits = params.forward_infer(&x)?;
        let (loss, _) = xent_loss(&logits, lab)?;
        loss_sum += loss * lab.len() as f64;
        correct += count_correct(&logits, lab, k);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss: loss_sum / data.len() as f64,
    })
}

/// Trains from a fresh initialization drawn from `rng` (substream 0 seeds
/// the weights, substream 1 the epoch shuffles), evaluating `val` after every
/// epoch. Returns the parameters of the epoch with the lowest validation
/// loss; ties keep the earlier epoch.
pub fn train(cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset, rng: &RngStream) -> Result<TrainedModel> {
    train_with_progress(cfg, train_set, val_set, rng, |_| {})
}

pub fn train_with_progress(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    rng: &RngStream,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyInput);
    }
    if train_set.class_count() != 2 {
        return Err(Error::Unsupported(format!(
            "{} classes; only binary problems are supported",
            train_set.class_count()
        )));
    }
    if val_set.series_len() != train_set.series_len() {
        return Err(Error::shape(format!(
            "validation length {} differs from training length {}",
            val_set.series_len(),
            train_set.series_len()
        )));
    }
    let labels = labels_of(train_set)?;
    let len = train_set.series_len();

    let mut params = FcnParams::init(FcnConfig::binary(len), &mut rng.substream(0))?;
    let mut shuffle_rng = rng.substream(1);
    let mut adam = AdamState::new(&params);
    let mut plateau = PlateauState::new(cfg);
    let mut best: Option<(FcnParams, usize, f64)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let lr = plateau.current_lr;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let x = batch_tensor(batch.iter().map(|&i| train_set.samples()[i].values.as_slice()), len)?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (logits, cache) = params.forward_train(&x)?;
            let (loss, grad_logits) = xent_loss(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            correct += count_correct(&logits, &y, params.config.class_count);
            let grads = params.backward(&cache, &grad_logits)?;
            adam.step(&mut params, &grads, lr)?;
            params.update_running_stats(&cache)?;
            loss_sum += loss * batch.len() as f64;
        }
        let val = evaluate(&params, val_set)?;
        if !val.loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val.loss });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            lr,
        };
        history.push(record);
        on_epoch(&record);
        if best.as_ref().is_none_or(|(_, _, b)| val.loss < *b) {
            best = Some((params.clone(), epoch, val.loss));
        }
        plateau.update(val.loss, cfg);
    }
    let (params, best_epoch, best_val_loss) = best.expect("at least one epoch ran");
    Ok(TrainedModel {
        params,
        best_epoch,
        best_val_loss,
        history,
    })
}
