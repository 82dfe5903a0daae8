//! Window-slice augmentation: cut a random contiguous window covering a fixed
//! fraction of the series, stretch it back to full length with a cubic
//! spline, then z-normalize. Each selected sample is augmented twice.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{znormalize, Dataset, TimeSeriesSample};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::RngStream;
use crate::spline::spline_resample;

pub const DEFAULT_WINDOW_FRACTION: f64 = 0.7;

/// Number of augmented series produced per selected sample.
pub const PASSES_PER_SAMPLE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSlice {
    pub start: usize,
    pub length: usize,
    pub values: Vec<f64>,
}

/// `floor(fraction * n)`, validated.
pub fn window_length(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!(
            "window fraction must lie in (0, 1], got {fraction}"
        )));
    }
    Ok((fraction * n as f64).floor() as usize)
}

pub fn slice_window(series: &[f64], fraction: f64, rng: &mut RngStream) -> Result<WindowSlice> {
    let n = series.len();
    let s = window_length(n, fraction)?;
    if n < 2 || s < 2 {
        return Err(Error::param(format!(
            "window of {s} points from a series of {n} is too short"
        )));
    }
    let start = rng.random_range(0..=n - s);
    Ok(WindowSlice {
        start,
        length: s,
        values: series[start..start + s].to_vec(),
    })
}

/// Every contiguous window of length `s`, in start order.
pub fn enumerate_slices(series: &[f64], s: usize) -> Result<Vec<WindowSlice>> {
    let n = series.len();
    if s == 0 || s > n {
        return Err(Error::param(format!("slice length {s} outside 1..={n}")));
    }
    Ok(series
        .windows(s)
        .enumerate()
        .map(|(start, w)| WindowSlice {
            start,
            length: s,
            values: w.to_vec(),
        })
        .collect())
}

/// One augmented series plus whether z-normalization hit a flat window.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub sample: TimeSeriesSample,
    pub window_start: usize,
    pub degenerate: bool,
}

fn augment_pass(sample: &TimeSeriesSample, fraction: f64, rng: &mut RngStream) -> Result<Augmented> {
    let n = sample.len();
    let window = slice_window(&sample.values, fraction, rng)?;
    let stretched = spline_resample(&window.values, n)?;
    let z = znormalize(&stretched);
    Ok(Augmented {
        sample: TimeSeriesSample::new(z.values, sample.label),
        window_start: window.start,
        degenerate: z.degenerate,
    })
}

/// Two independent slice → resample → normalize passes over one sample.
/// Each pass draws from its own substream of `rng`.
pub fn augment_sample(sample: &TimeSeriesSample, fraction: f64, rng: &RngStream) -> Result<(Augmented, Augmented)> {
    let first = augment_pass(sample, fraction, &mut rng.substream(0))?;
    let second = augment_pass(sample, fraction, &mut rng.substream(1))?;
    Ok((first, second))
}

/// Augments every sample of `selected`, each with a stream derived from
/// `(rng, position)`, and returns the outputs in sample order, two per
/// sample.
pub fn augment_all(selected: &Dataset, fraction: f64, rng: &RngStream) -> Result<Vec<Augmented>> {
    let pairs = par::map_indexed(selected.len(), |i| {
        augment_sample(&selected.samples()[i], fraction, &rng.substream(i as u64))
    });
    let mut out = Vec::with_capacity(PASSES_PER_SAMPLE * pairs.len());
    for pair in pairs {
        let (a, b) = pair?;
        out.push(a);
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{mean, population_std};

    #[test]
    fn ecg_length_window() {
        assert_eq!(window_length(96, 0.7).unwrap(), 67);
        let series: Vec<f64> = (0..96).map(|i| (i as f64).sin()).collect();
        let mut rng = RngStream::new(1, "window");
        for _ in 0..200 {
            let w = slice_window(&series, 0.7, &mut rng).unwrap();
            assert_eq!(w.length, 67);
            assert!(w.start <= 29);
            assert_eq!(w.values, series[w.start..w.start + 67]);
        }
    }

    #[test]
    fn ten_points_have_four_windows() {
        let series: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(window_length(10, 0.7).unwrap(), 7);
        let mut seen = [false; 4];
        let mut rng = RngStream::new(3, "window");
        for _ in 0..500 {
            let w = slice_window(&series, 0.7, &mut rng).unwrap();
            seen[w.start] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn full_fraction_is_identity() {
        let series = [1.0, 4.0, 2.0, 8.0, 5.0];
        let w = slice_window(&series, 1.0, &mut RngStream::new(0, "window")).unwrap();
        assert_eq!(w.start, 0);
        assert_eq!(w.values, series);
    }

    #[test]
    fn fraction_out_of_range() {
        let s = [1.0; 10];
        let mut rng = RngStream::new(0, "window");
        for f in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(slice_window(&s, f, &mut rng), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn enumerate_counts() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let slices = enumerate_slices(&s, 3).unwrap();
        assert_eq!(slices.iter().map(|w| w.start).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(slices[2].values, vec![3.0, 4.0, 5.0]);
        let whole = enumerate_slices(&s, 5).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].values, s);
        assert_eq!(enumerate_slices(&[0.0; 96], 67).unwrap().len(), 30);
        assert!(enumerate_slices(&s, 0).is_err());
        assert!(enumerate_slices(&s, 6).is_err());
    }

    #[test]
    fn augment_gives_two_normalized_series_with_label() {
        let sample = TimeSeriesSample::new((0..96).map(|i| (i as f64 * 0.2).sin() + 0.01 * i as f64).collect(), 1);
        let rng = RngStream::new(11, "window");
        let (a, b) = augment_sample(&sample, 0.7, &rng).unwrap();
        for out in [&a, &b] {
            assert_eq!(out.sample.len(), 96);
            assert_eq!(out.sample.label, 1);
            assert!(!out.degenerate);
            assert!(mean(&out.sample.values).abs() < 1e-9);
            assert!((population_std(&out.sample.values) - 1.0).abs() < 1e-9);
        }
        let (a2, b2) = augment_sample(&sample, 0.7, &rng).unwrap();
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn flat_sample_augments_to_flagged_zeros() {
        let sample = TimeSeriesSample::new(vec![2.5; 96], 0);
        let (a, b) = augment_sample(&sample, 0.7, &RngStream::new(0, "window")).unwrap();
        for out in [a, b] {
            assert!(out.degenerate);
            assert_eq!(out.sample.values, vec![0.0; 96]);
        }
    }

    #[test]
    fn too_short_window_for_spline() {
        let sample = TimeSeriesSample::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], 0);
        // floor(0.7 * 5) = 3 knots
        assert!(matches!(
            augment_sample(&sample, 0.7, &RngStream::new(0, "window")),
            Err(Error::Interpolation(3))
        ));
    }
}
