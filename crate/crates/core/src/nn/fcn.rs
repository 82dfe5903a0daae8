//! The fully convolutional classifier: three conv → batch-norm → ReLU blocks,
//! global average pooling over time, and a dense layer producing class logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, conv1d_backward, conv1d_forward,
    dense_backward, dense_forward, gap_backward, global_avg_pool, relu, relu_backward, softmax, update_running,
    BatchNormCache, Mode, PredictionDist, BN_MOMENTUM,
};
use super::tensor::Tensor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcnConfig {
    pub series_len: usize,
    pub class_count: usize,
    pub filters: usize,
    pub kernel: usize,
    pub blocks: usize,
}

impl FcnConfig {
    /// 64 filters, kernel 3, three blocks, two classes.
    pub fn binary(series_len: usize) -> Self {
        Self {
            series_len,
            class_count: 2,
            filters: 64,
            kernel: 3,
            blocks: 3,
        }
    }

    pub fn in_channels(&self, block: usize) -> usize {
        if block == 0 {
            1
        } else {
            self.filters
        }
    }

    /// Number of trainable scalars (running statistics excluded).
    pub fn learnable_count(&self) -> usize {
        let f = self.filters;
        let blocks: usize = (0..self.blocks)
            .map(|i| self.kernel * self.in_channels(i) * f + f + 2 * f)
            .sum();
        blocks + f * self.class_count + self.class_count
    }

    fn validate(&self) -> Result<()> {
        if self.series_len == 0 || self.class_count < 2 || self.filters == 0 || self.blocks == 0 {
            return Err(Error::param(format!("degenerate network config {self:?}")));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::param(format!("kernel length {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    /// `[kernel, in_channels, filters]`
    pub weights: Tensor,
    pub bias: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnParams {
    pub config: FcnConfig,
    pub blocks: Vec<ConvBlock>,
    /// `[filters, classes]`
    pub dense_weights: Tensor,
    pub dense_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Gradients laid out like the learnable part of [`FcnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct FcnGrads {
    pub blocks: Vec<BlockGrads>,
    pub dense_weights: Tensor,
    pub dense_bias: Tensor,
}

impl FcnGrads {
    /// `(name, tensor)` in the same order as [`FcnParams::learnable`].
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for (i, b) in self.blocks.iter().enumerate() {
            let n = i + 1;
            out.push((format!("block{n}.conv.weights"), &b.weights));
            out.push((format!("block{n}.conv.bias"), &b.bias));
            out.push((format!("block{n}.bn.gamma"), &b.gamma));
            out.push((format!("block{n}.bn.beta"), &b.beta));
        }
        out.push(("dense.weights".into(), &self.dense_weights));
        out.push(("dense.bias".into(), &self.dense_bias));
        out
    }
}

#[derive(Debug, Clone)]
struct BlockCache {
    conv_input: Tensor,
    bn: BatchNormCache,
    /// Batch-norm output, i.e. the ReLU input.
    pre_activation: Tensor,
}

/// Everything a train-mode forward keeps for the backward pass and for
/// committing batch statistics to the running averages.
#[derive(Debug, Clone)]
pub struct FcnCache {
    config: FcnConfig,
    batch: usize,
    blocks: Vec<BlockCache>,
    pooled_input_len: usize,
    pooled: Tensor,
}

impl FcnCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Sign pattern of every ReLU input (`true` where active). Used by
    /// finite-difference checks to reject steps that cross a kink.
    pub fn activation_mask(&self) -> Vec<bool> {
        self.blocks
            .iter()
            .flat_map(|b| b.pre_activation.data().iter().map(|&v| v > 0.0))
            .collect()
    }
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-limit..limit));
    t
}

/// Glorot bound for a conv layer with the given channel counts.
pub fn conv_glorot_limit(kernel: usize, cin: usize, cout: usize) -> f64 {
    (6.0 / (kernel * cin + kernel * cout) as f64).sqrt()
}

impl FcnParams {
    /// Glorot-uniform conv and dense weights, zero biases, unit `gamma`,
    /// zero `beta`, running mean 0 and running variance 1.
    pub fn init(config: FcnConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let f = config.filters;
        let k = config.kernel;
        let blocks = (0..config.blocks)
            .map(|i| {
                let cin = config.in_channels(i);
                ConvBlock {
                    weights: glorot(&[k, cin, f], k * cin, k * f, rng),
                    bias: Tensor::zeros(&[f]),
                    gamma: Tensor::filled(&[f], 1.0),
                    beta: Tensor::zeros(&[f]),
                    running_mean: Tensor::zeros(&[f]),
                    running_var: Tensor::filled(&[f], 1.0),
                }
            })
            .collect();
        let c = config.class_count;
        Ok(Self {
            config,
            blocks,
            dense_weights: glorot(&[f, c], f, c, rng),
            dense_bias: Tensor::zeros(&[c]),
        })
    }

    /// All-zero weights with identity batch-norm; predicts uniform probabilities.
    pub fn zeros(config: FcnConfig) -> Result<Self> {
        config.validate()?;
        let mut p = Self::init(config, &mut RngStream::new(0, "zeros"))?;
        for b in &mut p.blocks {
            b.weights.data_mut().fill(0.0);
        }
        p.dense_weights.data_mut().fill(0.0);
        Ok(p)
    }

    /// `(name, tensor)` for every trainable tensor, in a fixed order.
    pub fn learnable(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for (i, b) in self.blocks.iter().enumerate() {
            let n = i + 1;
            out.push((format!("block{n}.conv.weights"), &b.weights));
            out.push((format!("block{n}.conv.bias"), &b.bias));
            out.push((format!("block{n}.bn.gamma"), &b.gamma));
            out.push((format!("block{n}.bn.beta"), &b.beta));
        }
        out.push(("dense.weights".into(), &self.dense_weights));
        out.push(("dense.bias".into(), &self.dense_bias));
        out
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.push(&mut b.weights);
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(&mut self.dense_weights);
        out.push(&mut self.dense_bias);
        out
    }

    /// Every tensor including running statistics, by name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.learnable();
        for (i, b) in self.blocks.iter().enumerate() {
            let n = i + 1;
            out.push((format!("block{n}.bn.running_mean"), &b.running_mean));
            out.push((format!("block{n}.bn.running_var"), &b.running_var));
        }
        out
    }

    pub fn learnable_count(&self) -> usize {
        self.learnable().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        if self.blocks.len() != c.blocks {
            return Err(Error::shape(format!(
                "expected {} blocks, found {}",
                c.blocks,
                self.blocks.len()
            )));
        }
        let f = c.filters;
        for (i, b) in self.blocks.iter().enumerate() {
            b.weights
                .expect_shape("conv weights", &[c.kernel, c.in_channels(i), f])?;
            for (name, t) in [
                ("conv bias", &b.bias),
                ("bn gamma", &b.gamma),
                ("bn beta", &b.beta),
                ("bn running mean", &b.running_mean),
                ("bn running var", &b.running_var),
            ] {
                t.expect_shape(name, &[f])?;
            }
            if b.running_var.data().iter().any(|&v| v < 0.0) {
                return Err(Error::shape("negative running variance"));
            }
        }
        self.dense_weights.expect_shape("dense weights", &[f, c.class_count])?;
        self.dense_bias.expect_shape("dense bias", &[c.class_count])?;
        Ok(())
    }

    fn check_input(&self, batch: &Tensor) -> Result<usize> {
        let (b, l, c) = batch.dims3("network input")?;
        if l != self.config.series_len || c != 1 {
            return Err(Error::shape(format!(
                "network expects [B, {}, 1] input, got {:?}",
                self.config.series_len,
                batch.shape()
            )));
        }
        Ok(b)
    }

    /// Inference-mode logits `[B, classes]`; batch norm uses running statistics.
    pub fn forward_infer(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for blk in &self.blocks {
            let conv = conv1d_forward(&x, &blk.weights, &blk.bias)?;
            let bn = batchnorm_forward_infer(&conv, &blk.gamma, &blk.beta, &blk.running_mean, &blk.running_var)?;
            x = relu(&bn);
        }
        let pooled = global_avg_pool(&x)?;
        dense_forward(&pooled, &self.dense_weights, &self.dense_bias)
    }

    /// Train-mode logits plus the cache needed by [`FcnParams::backward`].
    /// Running statistics are left unchanged; commit them with
    /// [`FcnParams::update_running_stats`].
    pub fn forward_train(&self, batch: &Tensor) -> Result<(Tensor, FcnCache)> {
        let b = self.check_input(batch)?;
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let conv = conv1d_forward(&x, &blk.weights, &blk.bias)?;
            let (bn_out, bn) = batchnorm_forward_train(&conv, &blk.gamma, &blk.beta)?;
            let activated = relu(&bn_out);
            caches.push(BlockCache {
                conv_input: std::mem::replace(&mut x, activated),
                bn,
                pre_activation: bn_out,
            });
        }
        let pooled = global_avg_pool(&x)?;
        let logits = dense_forward(&pooled, &self.dense_weights, &self.dense_bias)?;
        Ok((
            logits,
            FcnCache {
                config: self.config,
                batch: b,
                blocks: caches,
                pooled_input_len: self.config.series_len,
                pooled,
            },
        ))
    }

    pub fn forward(&self, batch: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Infer => self.forward_infer(batch),
            Mode::Train => self.forward_train(batch).map(|(l, _)| l),
        }
    }

    /// Exact gradient of the loss with respect to every learnable tensor,
    /// given `d loss / d logits`.
    pub fn backward(&self, cache: &FcnCache, grad_logits: &Tensor) -> Result<FcnGrads> {
        if cache.config != self.config || cache.blocks.len() != self.blocks.len() {
            return Err(Error::Cache("cache was produced by a different network".into()));
        }
        let expected = [cache.batch, self.config.class_count];
        if grad_logits.shape() != expected {
            return Err(Error::Cache(format!(
                "logit gradient {:?} does not match cached batch {expected:?}",
                grad_logits.shape()
            )));
        }
        let dense = dense_backward(grad_logits, &cache.pooled, &self.dense_weights)?;
        let mut upstream = gap_backward(&dense.input, cache.pooled_input_len)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (blk, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let g_bn = relu_backward(&upstream, &bc.pre_activation)?;
            let bn = batchnorm_backward(&g_bn, &bc.bn, &blk.gamma)?;
            let conv = conv1d_backward(&bn.input, &bc.conv_input, &blk.weights)?;
            upstream = conv.input;
            blocks.push(BlockGrads {
                weights: conv.weights,
                bias: conv.bias,
                gamma: bn.gamma,
                beta: bn.beta,
            });
        }
        blocks.reverse();
        Ok(FcnGrads {
            blocks,
            dense_weights: dense.weights,
            dense_bias: dense.bias,
        })
    }

    /// Folds the batch statistics of a train-mode forward into the running
    /// averages.
    pub fn update_running_stats(&mut self, cache: &FcnCache) -> Result<()> {
        if cache.config != self.config {
            return Err(Error::Cache("cache was produced by a different network".into()));
        }
        for (blk, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            update_running(&mut blk.running_mean, &bc.bn.batch_mean, BN_MOMENTUM);
            update_running(&mut blk.running_var, &bc.bn.batch_var, BN_MOMENTUM);
        }
        Ok(())
    }

    /// Inference-mode class distribution for each sample.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<PredictionDist>> {
        let mut out = Vec::with_capacity(data.len());
        for chunk in data.samples().chunks(PREDICT_CHUNK) {
            let logits = self.forward_infer(&batch_tensor(
                chunk.iter().map(|s| s.values.as_slice()),
                self.config.series_len,
            )?)?;
            out.extend(logits.data().chunks_exact(self.config.class_count).map(softmax));
        }
        Ok(out)
    }
}

const PREDICT_CHUNK: usize = 64;

/// Stacks equal-length series into a `[B, len, 1]` tensor.
pub fn batch_tensor<'a>(series: impl Iterator<Item = &'a [f64]>, len: usize) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut b = 0;
    for s in series {
        if s.len() != len {
            return Err(Error::shape(format!(
                "series of length {} where {len} was expected",
                s.len()
            )));
        }
        data.extend_from_slice(s);
        b += 1;
    }
    Tensor::new(vec![b, len, 1], data)
}

/// Convenience wrapper over [`FcnParams::forward`].
pub fn fcn_forward(params: &FcnParams, batch: &Tensor, mode: Mode) -> Result<Tensor> {
    params.forward(batch, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecg_parameter_count() {
        let cfg = FcnConfig::binary(96);
        let expected = (3 * 64 + 64) + 2 * 64 + 2 * (64 * 3 * 64 + 64) + 2 * 2 * 64 + (64 * 2 + 2);
        assert_eq!(expected, 25_474);
        assert_eq!(cfg.learnable_count(), 25_474);
        let p = FcnParams::init(cfg, &mut RngStream::new(0, "init")).unwrap();
        assert_eq!(p.learnable_count(), 25_474);
        p.validate().unwrap();
    }

    #[test]
    fn logits_shape() {
        let p = FcnParams::init(FcnConfig::binary(96), &mut RngStream::new(1, "init")).unwrap();
        let x = Tensor::filled(&[5, 96, 1], 0.3);
        assert_eq!(p.forward_infer(&x).unwrap().shape(), &[5, 2]);
        assert_eq!(p.forward_train(&x).unwrap().0.shape(), &[5, 2]);
        assert!(p.forward_infer(&Tensor::zeros(&[5, 95, 1])).is_err());
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = FcnParams::zeros(FcnConfig::binary(96)).unwrap();
        let x = Tensor::new(vec![1, 96, 1], (0..96).map(|i| (i as f64).cos()).collect()).unwrap();
        let logits = p.forward_infer(&x).unwrap();
        assert_eq!(logits.data(), &[0.0, 0.0]);
        assert_eq!(softmax(logits.data()).probs, vec![0.5, 0.5]);
    }

    #[test]
    fn init_constants_and_bounds() {
        let p = FcnParams::init(FcnConfig::binary(96), &mut RngStream::new(9, "init")).unwrap();
        for b in &p.blocks {
            assert!(b.bias.data().iter().all(|&v| v == 0.0));
            assert!(b.gamma.data().iter().all(|&v| v == 1.0));
            assert!(b.beta.data().iter().all(|&v| v == 0.0));
            assert!(b.running_mean.data().iter().all(|&v| v == 0.0));
            assert!(b.running_var.data().iter().all(|&v| v == 1.0));
        }
        assert!(p.dense_bias.data().iter().all(|&v| v == 0.0));
        let a = (6.0f64 / (3.0 * 64.0 + 3.0 * 64.0)).sqrt();
        assert_eq!(conv_glorot_limit(3, 64, 64), a);
        let w = p.blocks[1].weights.data();
        assert!(w.iter().all(|v| v.abs() <= a));
        // a uniform draw of 12k values should get close to the bound
        assert!(w.iter().fold(0.0f64, |m, v| m.max(v.abs())) > 0.95 * a);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = FcnConfig::binary(96);
        let a = FcnParams::init(cfg, &mut RngStream::new(5, "init")).unwrap();
        let b = FcnParams::init(cfg, &mut RngStream::new(5, "init")).unwrap();
        assert_eq!(a, b);
        let c = FcnParams::init(cfg, &mut RngStream::new(6, "init")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let cfg = FcnConfig::binary(8);
        let p = FcnParams::init(cfg, &mut RngStream::new(1, "init")).unwrap();
        let (_, cache) = p.forward_train(&Tensor::filled(&[3, 8, 1], 0.1)).unwrap();
        assert!(matches!(
            p.backward(&cache, &Tensor::zeros(&[2, 2])),
            Err(Error::Cache(_))
        ));
        let other = FcnParams::init(FcnConfig::binary(9), &mut RngStream::new(1, "init")).unwrap();
        assert!(matches!(
            other.backward(&cache, &Tensor::zeros(&[3, 2])),
            Err(Error::Cache(_))
        ));
    }

    #[test]
    fn zero_logit_grad_gives_zero_grads() {
        let cfg = FcnConfig::binary(12);
        let p = FcnParams::init(cfg, &mut RngStream::new(2, "init")).unwrap();
        let x = Tensor::new(vec![2, 12, 1], (0..24).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let (_, cache) = p.forward_train(&x).unwrap();
        let g = p.backward(&cache, &Tensor::zeros(&[2, 2])).unwrap();
        assert!(g.tensors().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn infer_is_repeatable() {
        let p = FcnParams::init(FcnConfig::binary(20), &mut RngStream::new(4, "init")).unwrap();
        let x = Tensor::new(vec![3, 20, 1], (0..60).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let a = p.forward_infer(&x).unwrap();
        let b = p.forward_infer(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
