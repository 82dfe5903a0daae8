#![allow(dead_code)]

use fcn_selaug::data::{Dataset, TimeSeriesSample};
use fcn_selaug::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let up = f(&xp);
    xp[i] = x[i] - h;
    let down = f(&xp);
    (up - down) / (2.0 * h)
}

/// Worst relative error between `analytic` and central differences of `f`
/// over `coords`.
pub fn worst_rel_err(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], coords: &[usize]) -> f64 {
    coords
        .iter()
        .map(|&i| rel_err(analytic[i], central_diff(&mut f, x, i, FD_STEP)))
        .fold(0.0, f64::max)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::new(shape.to_vec(), random_vec(rng, shape.iter().product(), scale)).unwrap()
}

/// Up to `count` distinct coordinates of `0..n`, or all of them if fewer.
pub fn sample_coords(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    rand::seq::index::sample(rng, n, count).into_vec()
}

/// `Σ r ⊙ y`: a random linear probe turning a layer output into a scalar.
pub fn probe(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Two-class noisy sinusoid bumps, loosely shaped like single heartbeats.
pub fn toy_dataset(n: usize, len: usize, seed: u64) -> Dataset {
    fcn_selaug::synthetic::two_class_series(n, len, seed)
}

pub fn tiny_dataset(labels: &[i64], len: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    Dataset::with_classes(
        labels
            .iter()
            .map(|&l| TimeSeriesSample::new(random_vec(&mut r, len, 1.0), l))
            .collect(),
        2,
    )
    .unwrap()
}

use fcn_selaug::nn::{batch_tensor, xent_loss, FcnConfig, FcnParams};
use fcn_selaug::rng::RngStream;

pub struct FullCheck {
    pub worst: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

fn nudge(params: &mut FcnParams, tensor: usize, idx: usize, delta: f64) {
    params.learnable_mut()[tensor].data_mut()[idx] += delta;
}

/// Central-difference check of the full train-mode loss against
/// `backward`, on `coords` random learnable coordinates. Steps that flip any
/// ReLU's sign are discarded and redrawn, since the loss is not
/// differentiable across those kinks.
pub fn full_loss_check(cfg: FcnConfig, batch: usize, coords: usize, seed: u64) -> FullCheck {
    let mut r = rng(seed);
    let mut params = FcnParams::init(cfg, &mut RngStream::new(seed, "init")).unwrap();
    // move batch-norm affine params off their trivial init
    for b in &mut params.blocks {
        for v in b.gamma.data_mut() {
            *v = r.random_range(0.5..1.5);
        }
        for v in b.beta.data_mut() {
            *v = r.random_range(-0.3..0.3);
        }
        for v in b.bias.data_mut() {
            *v = r.random_range(-0.2..0.2);
        }
    }
    let series: Vec<Vec<f64>> = (0..batch).map(|_| random_vec(&mut r, cfg.series_len, 1.5)).collect();
    let labels: Vec<usize> = (0..batch).map(|i| i % 2).collect();
    let x = batch_tensor(series.iter().map(Vec::as_slice), cfg.series_len).unwrap();

    let loss_and_mask = |p: &FcnParams| {
        let (logits, cache) = p.forward_train(&x).unwrap();
        (xent_loss(&logits, &labels).unwrap().0, cache.activation_mask())
    };
    let (logits, cache) = params.forward_train(&x).unwrap();
    let (_, grad_logits) = xent_loss(&logits, &labels).unwrap();
    let grads = params.backward(&cache, &grad_logits).unwrap();
    let base_mask = cache.activation_mask();

    let sizes: Vec<usize> = grads.tensors().iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let flat_grad: Vec<f64> = grads.tensors().iter().flat_map(|(_, t)| t.data().to_vec()).collect();
    let locate = |mut flat: usize| {
        for (ti, &s) in sizes.iter().enumerate() {
            if flat < s {
                return (ti, flat);
            }
            flat -= s;
        }
        unreachable!()
    };

    let mut order = sample_coords(&mut r, total, total).into_iter();
    let mut out = FullCheck {
        worst: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    while out.checked < coords {
        let Some(flat) = order.next() else { break };
        let (ti, idx) = locate(flat);
        nudge(&mut params, ti, idx, FD_STEP);
        let (up, mask_up) = loss_and_mask(&params);
        nudge(&mut params, ti, idx, -2.0 * FD_STEP);
        let (down, mask_down) = loss_and_mask(&params);
        nudge(&mut params, ti, idx, FD_STEP);
        if mask_up != base_mask || mask_down != base_mask {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        out.worst = out.worst.max(rel_err(flat_grad[flat], numeric));
        out.checked += 1;
    }
    out
}
