//! JSON checkpoint documents.
//!
//! A checkpoint stores the network configuration, every tensor by name with
//! its shape and values, the epoch it was taken at and the validation loss at
//! that epoch. Floats are written in shortest round-trip form and parsed
//! exactly, so a reloaded model is bit-identical to the saved one.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ConvBlock, FcnConfig, FcnParams, Tensor};
use crate::train::{EpochRecord, TrainedModel};

pub const FORMAT: &str = "fcn-selaug-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    config: FcnConfig,
    epoch: usize,
    val_loss: f64,
    tensors: Vec<NamedTensor>,
    #[serde(default)]
    history: Vec<EpochRecord>,
}

pub fn to_json(model: &TrainedModel) -> Result<String> {
    let doc = CheckpointDoc {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        config: model.params.config,
        epoch: model.best_epoch,
        val_loss: model.best_val_loss,
        tensors: model
            .params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
            .collect(),
        history: model.history.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(text: &str) -> std::result::Result<TrainedModel, String> {
    let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| format!("corrupt document: {e}"))?;
    if doc.format != FORMAT {
        return Err(format!("unknown format tag {:?}", doc.format));
    }
    if doc.version != FORMAT_VERSION {
        return Err(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            doc.version
        ));
    }
    let mut by_name: BTreeMap<String, Tensor> = BTreeMap::new();
    for t in doc.tensors {
        let tensor = Tensor::new(t.shape, t.values).map_err(|e| format!("tensor {}: {e}", t.name))?;
        if by_name.insert(t.name.clone(), tensor).is_some() {
            return Err(format!("duplicate tensor {}", t.name));
        }
    }
    let mut take = |name: String| by_name.remove(&name).ok_or(format!("missing tensor {name}"));
    let cfg = doc.config;
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for i in 1..=cfg.blocks {
        blocks.push(ConvBlock {
            weights: take(format!("block{i}.conv.weights"))?,
            bias: take(format!("block{i}.conv.bias"))?,
            gamma: take(format!("block{i}.bn.gamma"))?,
            beta: take(format!("block{i}.bn.beta"))?,
            running_mean: take(format!("block{i}.bn.running_mean"))?,
            running_var: take(format!("block{i}.bn.running_var"))?,
        });
    }
    let params = FcnParams {
        config: cfg,
        blocks,
        dense_weights: take("dense.weights".into())?,
        dense_bias: take("dense.bias".into())?,
    };
    if let Some(extra) = by_name.keys().next() {
        return Err(format!("unexpected tensor {extra}"));
    }
    params.validate().map_err(|e| e.to_string())?;
    Ok(TrainedModel {
        params,
        best_epoch: doc.epoch,
        best_val_loss: doc.val_loss,
        history: doc.history,
    })
}

pub fn save_checkpoint(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    from_json(&text).map_err(|message| Error::Checkpoint {
        path: path.to_owned(),
        message,
    })
}
