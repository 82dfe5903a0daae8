//! Synthetic two-class series for smoke runs, benches and tests when no
//! archive data is at hand.
//!
//! Class 0 is a single positive bump; class 1 has the bump shifted later and
//! followed by a shallow negative dip. Positions, widths and amplitudes are
//! jittered and Gaussian noise is added, so the classes overlap somewhat.

use rand::Rng;

use crate::data::{znormalize, Dataset, TimeSeriesSample};
use crate::rng::RngStream;

fn gaussian(rng: &mut RngStream) -> f64 {
    // Box–Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn bump(x: f64, centre: f64, width: f64) -> f64 {
    let d = (x - centre) / width;
    (-0.5 * d * d).exp()
}

/// `n` z-normalized series of length `len`, labels alternating 0/1.
pub fn two_class_series(n: usize, len: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, "synthetic");
    let samples = (0..n)
        .map(|i| {
            let label = (i % 2) as i64;
            let centre = if label == 0 { 0.35 } else { 0.45 } + 0.06 * gaussian(&mut rng);
            let width = 0.06 + 0.015 * gaussian(&mut rng).abs();
            let amp = 1.0 + 0.2 * gaussian(&mut rng);
            let dip = if label == 1 {
                0.45 + 0.15 * gaussian(&mut rng)
            } else {
                0.1 * gaussian(&mut rng)
            };
            let values: Vec<f64> = (0..len)
                .map(|t| {
                    let x = t as f64 / len.max(2) as f64;
                    amp * bump(x, centre, width) - dip * bump(x, centre + 0.22, 0.08) + 0.15 * gaussian(&mut rng)
                })
                .collect();
            TimeSeriesSample::new(znormalize(&values).values, label)
        })
        .collect();
    Dataset::with_classes(samples, 2).expect("synthetic samples are well formed")
}
