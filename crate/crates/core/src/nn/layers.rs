//! Layer kernels with hand-derived backward passes.
//!
//! Activations are `[batch, time, channels]`, row-major. Batch-axis work is
//! fanned out through [`crate::par`]; per-sample partial weight gradients are
//! summed afterwards in sample order so results do not depend on scheduling.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par;

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Convolution

fn conv_dims(input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (b, l, cin) = input.dims3("conv input")?;
    weights.expect_rank("conv weights", 3)?;
    let (k, wcin, cout) = (weights.shape()[0], weights.shape()[1], weights.shape()[2]);
    if k % 2 == 0 {
        return Err(Error::shape(format!("kernel length {k} must be odd")));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv weights expect {wcin} input channels, input has {cin}"
        )));
    }
    Ok((b, l, cin, k, cout))
}

/// Same-padded 1-D convolution:
/// `out[b,t,co] = bias[co] + Σ_{k,ci} w[k,ci,co] · x[b, t+k-pad, ci]`
/// with zeros outside the series and `pad = (kernel-1)/2`.
pub fn conv1d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (batch, len, cin, k, cout) = conv_dims(input, weights)?;
    bias.expect_shape("conv bias", &[cout])?;
    let pad = k / 2;
    let x = input.data();
    let w = weights.data();
    let bvec = bias.data();
    let mut out = Tensor::zeros(&[batch, len, cout]);
    par::for_each_chunk(out.data_mut(), len * cout, |b, chunk| {
        let xb = &x[b * len * cin..(b + 1) * len * cin];
        for t in 0..len {
            let row = &mut chunk[t * cout..(t + 1) * cout];
            row.copy_from_slice(bvec);
            for kk in 0..k {
                let Some(src) = (t + kk).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                let xrow = &xb[src * cin..(src + 1) * cin];
                let wk = &w[kk * cin * cout..(kk + 1) * cin * cout];
                for (ci, &xv) in xrow.iter().enumerate() {
                    axpy(row, xv, &wk[ci * cout..(ci + 1) * cout]);
                }
            }
        }
    });
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn conv1d_backward(upstream: &Tensor, input: &Tensor, weights: &Tensor) -> Result<ConvGrads> {
    let (batch, len, cin, k, cout) = conv_dims(input, weights)?;
    upstream.expect_shape("conv upstream", &[batch, len, cout])?;
    let pad = k / 2;
    let x = input.data();
    let w = weights.data();
    let g = upstream.data();

    let mut grad_input = Tensor::zeros(&[batch, len, cin]);
    par::for_each_chunk(grad_input.data_mut(), len * cin, |b, chunk| {
        let gb = &g[b * len * cout..(b + 1) * len * cout];
        for s in 0..len {
            let row = &mut chunk[s * cin..(s + 1) * cin];
            for kk in 0..k {
                // s = t + kk - pad
                let Some(t) = (s + pad).checked_sub(kk).filter(|&t| t < len) else {
                    continue;
                };
                let grow = &gb[t * cout..(t + 1) * cout];
                let wk = &w[kk * cin * cout..(kk + 1) * cin * cout];
                for (ci, r) in row.iter_mut().enumerate() {
                    *r += dot(&wk[ci * cout..(ci + 1) * cout], grow);
                }
            }
        }
    });

    let partials = par::map_indexed(batch, |b| {
        let xb = &x[b * len * cin..(b + 1) * len * cin];
        let gb = &g[b * len * cout..(b + 1) * len * cout];
        let mut gw = vec![0.0; k * cin * cout];
        let mut gbias = vec![0.0; cout];
        for t in 0..len {
            let grow = &gb[t * cout..(t + 1) * cout];
            add_assign(&mut gbias, grow);
            for kk in 0..k {
                let Some(src) = (t + kk).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                let xrow = &xb[src * cin..(src + 1) * cin];
                let gwk = &mut gw[kk * cin * cout..(kk + 1) * cin * cout];
                for (ci, &xv) in xrow.iter().enumerate() {
                    axpy(&mut gwk[ci * cout..(ci + 1) * cout], xv, grow);
                }
            }
        }
        (gw, gbias)
    });
    let mut gw = vec![0.0; k * cin * cout];
    let mut gbias = vec![0.0; cout];
    for (pw, pb) in &partials {
        add_assign(&mut gw, pw);
        add_assign(&mut gbias, pb);
    }
    Ok(ConvGrads {
        input: grad_input,
        weights: Tensor::new(vec![k, cin, cout], gw)?,
        bias: Tensor::new(vec![cout], gbias)?,
    })
}

// ---------------------------------------------------------------------------
// Batch normalization

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Values saved by a train-mode batch-norm forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Tensor,
    pub batch_mean: Vec<f64>,
    /// Biased (divide-by-n) batch variance.
    pub batch_var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Per-channel mean and biased variance over the batch and time axes.
fn channel_moments(x: &[f64], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (x.len() / channels) as f64;
    let mut mean = vec![0.0; channels];
    for row in x.chunks_exact(channels) {
        add_assign(&mut mean, row);
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; channels];
    for row in x.chunks_exact(channels) {
        for ((v, xv), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = xv - m;
            *v += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    (mean, var)
}

/// Train mode: normalize each channel by its statistics over all
/// `batch · time` positions, then scale by `gamma` and shift by `beta`.
/// Running statistics are not touched here; see [`update_running`].
pub fn batchnorm_forward_train(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, BatchNormCache)> {
    let (b, l, c) = input.dims3("batchnorm input")?;
    gamma.expect_shape("batchnorm gamma", &[c])?;
    beta.expect_shape("batchnorm beta", &[c])?;
    if b * l < 2 {
        return Err(Error::shape("train-mode batch norm needs at least 2 positions"));
    }
    let (mean, var) = channel_moments(input.data(), c);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut normalized = input.clone();
    let mut out = Tensor::zeros(input.shape());
    for (nrow, orow) in normalized
        .data_mut()
        .chunks_exact_mut(c)
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        for ch in 0..c {
            let xh = (nrow[ch] - mean[ch]) * inv_std[ch];
            nrow[ch] = xh;
            orow[ch] = gamma.data()[ch] * xh + beta.data()[ch];
        }
    }
    Ok((
        out,
        BatchNormCache {
            normalized,
            batch_mean: mean,
            batch_var: var,
            inv_std,
        },
    ))
}

pub fn batchnorm_forward_infer(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
) -> Result<Tensor> {
    let (_, _, c) = input.dims3("batchnorm input")?;
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running mean", running_mean),
        ("running var", running_var),
    ] {
        t.expect_shape(name, &[c])?;
    }
    let scale: Vec<f64> = gamma
        .data()
        .iter()
        .zip(running_var.data())
        .map(|(g, v)| g / (v + BN_EPSILON).sqrt())
        .collect();
    let mut out = input.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        for ch in 0..c {
            row[ch] = (row[ch] - running_mean.data()[ch]) * scale[ch] + beta.data()[ch];
        }
    }
    Ok(out)
}

/// `running ← momentum · running + (1 − momentum) · batch`.
pub fn update_running(running: &mut Tensor, batch: &[f64], momentum: f64) {
    for (r, b) in running.data_mut().iter_mut().zip(batch) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Gradient of the train-mode forward, including the dependence of the batch
/// statistics on the input:
/// `dx = γ·inv_std/N · (N·g − Σg − x̂·Σ(g·x̂))`.
pub fn batchnorm_backward(upstream: &Tensor, cache: &BatchNormCache, gamma: &Tensor) -> Result<BatchNormGrads> {
    let shape = cache.normalized.shape();
    upstream.expect_shape("batchnorm upstream", shape)?;
    let c = shape[2];
    gamma.expect_shape("batchnorm gamma", &[c])?;
    let n = (shape[0] * shape[1]) as f64;
    let g = upstream.data();
    let xh = cache.normalized.data();

    let mut dbeta = vec![0.0; c];
    let mut dgamma = vec![0.0; c];
    for (grow, xrow) in g.chunks_exact(c).zip(xh.chunks_exact(c)) {
        for ch in 0..c {
            dbeta[ch] += grow[ch];
            dgamma[ch] += grow[ch] * xrow[ch];
        }
    }
    let coef: Vec<f64> = (0..c).map(|ch| gamma.data()[ch] * cache.inv_std[ch] / n).collect();
    let mut dx = Tensor::zeros(shape);
    for ((drow, grow), xrow) in dx
        .data_mut()
        .chunks_exact_mut(c)
        .zip(g.chunks_exact(c))
        .zip(xh.chunks_exact(c))
    {
        for ch in 0..c {
            drow[ch] = coef[ch] * (n * grow[ch] - dbeta[ch] - xrow[ch] * dgamma[ch]);
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: Tensor::new(vec![c], dgamma)?,
        beta: Tensor::new(vec![c], dbeta)?,
    })
}

// ---------------------------------------------------------------------------
// ReLU

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Passes upstream through where the forward input was strictly positive.
pub fn relu_backward(upstream: &Tensor, input: &Tensor) -> Result<Tensor> {
    upstream.expect_shape("relu upstream", input.shape())?;
    let mut out = upstream.clone();
    for (o, x) in out.data_mut().iter_mut().zip(input.data()) {
        if *x <= 0.0 {
            *o = 0.0;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Global average pooling

pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (b, l, c) = input.dims3("pool input")?;
    let mut out = vec![0.0; b * c];
    for (sample, acc) in input.data().chunks_exact(l * c).zip(out.chunks_exact_mut(c)) {
        for row in sample.chunks_exact(c) {
            add_assign(acc, row);
        }
        acc.iter_mut().for_each(|v| *v /= l as f64);
    }
    Tensor::new(vec![b, c], out)
}

pub fn gap_backward(upstream: &Tensor, len: usize) -> Result<Tensor> {
    upstream.expect_rank("pool upstream", 2)?;
    let (b, c) = (upstream.shape()[0], upstream.shape()[1]);
    let mut out = Tensor::zeros(&[b, len, c]);
    for (sample, u) in out
        .data_mut()
        .chunks_exact_mut(len * c)
        .zip(upstream.data().chunks_exact(c))
    {
        for row in sample.chunks_exact_mut(c) {
            for (r, uv) in row.iter_mut().zip(u) {
                *r = uv / len as f64;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dense

fn dense_dims(input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize)> {
    input.expect_rank("dense input", 2)?;
    weights.expect_rank("dense weights", 2)?;
    let (b, fin) = (input.shape()[0], input.shape()[1]);
    if weights.shape()[0] != fin {
        return Err(Error::shape(format!(
            "dense weights expect {} features, input has {fin}",
            weights.shape()[0]
        )));
    }
    Ok((b, fin, weights.shape()[1]))
}

/// `logits = input · W + b`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, fin, fout) = dense_dims(input, weights)?;
    bias.expect_shape("dense bias", &[fout])?;
    let mut out = vec![0.0; b * fout];
    for (x, o) in input.data().chunks_exact(fin).zip(out.chunks_exact_mut(fout)) {
        o.copy_from_slice(bias.data());
        for (i, &xv) in x.iter().enumerate() {
            axpy(o, xv, &weights.data()[i * fout..(i + 1) * fout]);
        }
    }
    Tensor::new(vec![b, fout], out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(upstream: &Tensor, input: &Tensor, weights: &Tensor) -> Result<DenseGrads> {
    let (b, fin, fout) = dense_dims(input, weights)?;
    upstream.expect_shape("dense upstream", &[b, fout])?;
    let w = weights.data();
    let mut gx = vec![0.0; b * fin];
    let mut gw = vec![0.0; fin * fout];
    let mut gb = vec![0.0; fout];
    for ((x, g), gxr) in input
        .data()
        .chunks_exact(fin)
        .zip(upstream.data().chunks_exact(fout))
        .zip(gx.chunks_exact_mut(fin))
    {
        add_assign(&mut gb, g);
        for i in 0..fin {
            axpy(&mut gw[i * fout..(i + 1) * fout], x[i], g);
            gxr[i] = dot(&w[i * fout..(i + 1) * fout], g);
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![b, fin], gx)?,
        weights: Tensor::new(vec![fin, fout], gw)?,
        bias: Tensor::new(vec![fout], gb)?,
    })
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy

/// Softmax output over the classes, plus the two-class confidence margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDist {
    pub probs: Vec<f64>,
    /// `|p0 − p1|` for two classes; `None` otherwise.
    pub alpha: Option<f64>,
}

impl PredictionDist {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let alpha = match probs.as_slice() {
            [p0, p1] => Some((p0 - p1).abs()),
            _ => None,
        };
        Self { probs, alpha }
    }

    /// Index of the most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

fn log_sum_exp(z: &[f64]) -> (f64, f64) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    (max, sum)
}

pub fn softmax(logits: &[f64]) -> PredictionDist {
    let (max, sum) = log_sum_exp(logits);
    PredictionDist::from_probs(logits.iter().map(|v| (v - max).exp() / sum).collect())
}

/// Mean sparse categorical cross-entropy and its gradient,
/// `(softmax − onehot) / B`.
pub fn xent_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    logits.expect_rank("logits", 2)?;
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for {b} logit rows", labels.len())));
    }
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (row, &label) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        if label >= k {
            return Err(Error::Label {
                label: label as i64,
                classes: k,
            });
        }
        let (max, sum) = log_sum_exp(row);
        total += max + sum.ln() - row[label];
        for v in row.iter_mut() {
            *v = (*v - max).exp() / sum / b as f64;
        }
        row[label] -= 1.0 / b as f64;
    }
    Ok((total / b as f64, grad))
}
