//! UCR-archive text datasets: parsing, preprocessing and the test-set split.
//!
//! A UCR file holds one series per line, class label first, fields separated
//! by tabs, commas or runs of spaces. Older archive releases write labels as
//! floats (`-1.0000000e+00`); any integral float is accepted as a label.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population standard deviation below which a series counts as flat.
pub const DEGENERATE_STD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSample {
    pub values: Vec<f64>,
    /// Raw class label as read (e.g. -1/1); a class index in `0..class_count`
    /// once [`remap_labels`] has run.
    pub label: i64,
}

impl TimeSeriesSample {
    pub fn new(values: Vec<f64>, label: i64) -> Self {
        Self { values, label }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<TimeSeriesSample>,
    series_len: usize,
    class_count: usize,
}

impl Dataset {
    /// Builds a dataset, checking equal lengths and finite values.
    /// `class_count` is the number of distinct labels present.
    pub fn new(samples: Vec<TimeSeriesSample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyInput)?;
        let series_len = first.len();
        if series_len == 0 {
            return Err(Error::Format {
                line: 1,
                message: "sample has no values".into(),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() != series_len {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("expected {series_len} values, found {}", s.len()),
                });
            }
            if let Some(j) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("value {} is not finite", j + 1),
                });
            }
        }
        let class_count = samples.iter().map(|s| s.label).collect::<BTreeSet<_>>().len();
        Ok(Self {
            samples,
            series_len,
            class_count,
        })
    }

    /// Builds a dataset whose labels are class indices in `0..class_count`.
    pub fn with_classes(samples: Vec<TimeSeriesSample>, class_count: usize) -> Result<Self> {
        let mut d = Self::new(samples)?;
        if let Some(s) = d
            .samples
            .iter()
            .find(|s| s.label < 0 || s.label as usize >= class_count)
        {
            return Err(Error::Label {
                label: s.label,
                classes: class_count,
            });
        }
        d.class_count = class_count;
        Ok(d)
    }

    pub fn samples(&self) -> &[TimeSeriesSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<TimeSeriesSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> + '_ {
        self.samples.iter().map(|s| s.label)
    }

    /// Whether every label is a valid index into `0..class_count`.
    pub fn has_index_labels(&self) -> bool {
        self.labels().all(|l| l >= 0 && (l as usize) < self.class_count)
    }

    /// A new dataset with `extra` appended after the existing samples.
    pub fn extended(&self, extra: impl IntoIterator<Item = TimeSeriesSample>) -> Result<Self> {
        let mut samples = self.samples.clone();
        samples.extend(extra);
        Self::with_classes(samples, self.class_count)
    }

    /// A subset in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::param(format!("sample index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut d = Self::new(samples)?;
        d.class_count = self.class_count;
        Ok(d)
    }

    /// Serializes back to UCR text: label first, tab-separated, one line per
    /// sample. Values use the shortest exact decimal form, so re-parsing is
    /// lossless.
    pub fn to_ucr_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * self.series_len * 12);
        for s in &self.samples {
            let _ = write!(out, "{}", s.label);
            for v in &s.values {
                let _ = write!(out, "\t{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
}

fn parse_label(field: &str, line: usize) -> Result<i64> {
    let bad = || Error::Parse {
        line,
        field: 1,
        value: field.to_owned(),
    };
    if let Ok(l) = field.parse::<i64>() {
        return Ok(l);
    }
    let f: f64 = field.parse().map_err(|_| bad())?;
    if f.is_finite() && f.fract() == 0.0 && f.abs() < 1e15 {
        Ok(f as i64)
    } else {
        Err(bad())
    }
}

/// Parses UCR text. Blank lines are skipped; line numbers in errors are
/// 1-based positions in the input.
pub fn parse_ucr(text: &str) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut series_len = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut fields = split_fields(raw);
        let Some(label_field) = fields.next() else {
            continue;
        };
        let label = parse_label(label_field, line)?;
        let values = fields
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    field: j + 2,
                    value: f.to_owned(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Format {
                line,
                message: "label without values".into(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format {
                line,
                message: format!("value {} is not finite", j + 1),
            });
        }
        match series_len {
            None => series_len = Some(values.len()),
            Some(n) if n != values.len() => {
                return Err(Error::Format {
                    line,
                    message: format!("expected {n} values, found {}", values.len()),
                })
            }
            _ => {}
        }
        samples.push(TimeSeriesSample { values, label });
    }
    Dataset::new(samples)
}

pub fn load_ucr(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_ucr(&std::fs::read_to_string(path)?)
}

pub fn save_ucr(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset.to_ucr_text())?;
    Ok(())
}

/// Maps the binary labels -1/1 onto class indices 0/1. Labels already in
/// {0, 1} pass through, so the operation is idempotent.
pub fn remap_labels(dataset: Dataset) -> Result<Dataset> {
    let samples = dataset
        .into_samples()
        .into_iter()
        .map(|mut s| {
            s.label = match s.label {
                -1 | 0 => 0,
                1 => 1,
                other => return Err(Error::UnsupportedLabel(other)),
            };
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_classes(samples, 2)
}

/// Result of z-normalizing one series.
#[derive(Debug, Clone, PartialEq)]
pub struct ZNormalized {
    pub values: Vec<f64>,
    /// Set when the input was flat (population std < [`DEGENERATE_STD`]);
    /// `values` is then all zeros.
    pub degenerate: bool,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population (divide-by-n) standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// `(v − mean) / popstd`. The centred values get a second mean-removal pass,
/// which cancels the rounding error of the first mean when the series sits
/// on a large offset.
pub fn znormalize(values: &[f64]) -> ZNormalized {
    let m = mean(values);
    let mut centred: Vec<f64> = values.iter().map(|v| v - m).collect();
    let residual = mean(&centred);
    for c in &mut centred {
        *c -= residual;
    }
    let std = (centred.iter().map(|c| c * c).sum::<f64>() / centred.len() as f64).sqrt();
    if std.is_nan() || std < DEGENERATE_STD {
        return ZNormalized {
            values: vec![0.0; values.len()],
            degenerate: true,
        };
    }
    for c in &mut centred {
        *c /= std;
    }
    ZNormalized {
        values: centred,
        degenerate: false,
    }
}

/// Label remap followed by per-series z-normalization. Returns the dataset
/// and the number of flat series that normalized to zeros.
pub fn preprocess(dataset: Dataset) -> Result<(Dataset, usize)> {
    let remapped = remap_labels(dataset)?;
    let mut degenerate = 0;
    let samples = remapped
        .samples()
        .iter()
        .map(|s| {
            let z = znormalize(&s.values);
            degenerate += usize::from(z.degenerate);
            TimeSeriesSample::new(z.values, s.label)
        })
        .collect();
    Ok((Dataset::with_classes(samples, remapped.class_count())?, degenerate))
}

/// Splits a test set into its first and second halves in file order.
pub fn split_test(test: &Dataset) -> Result<(Dataset, Dataset)> {
    let n = test.len();
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::Split(n));
    }
    let (a, b) = test.samples.split_at(n / 2);
    let half = |s: &[TimeSeriesSample]| -> Result<Dataset> {
        let mut d = Dataset::new(s.to_vec())?;
        d.class_count = test.class_count;
        Ok(d)
    };
    Ok((half(a)?, half(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(labels: &[i64]) -> Dataset {
        Dataset::new(
            labels
                .iter()
                .map(|&l| TimeSeriesSample::new(vec![0.5, -1.0, 2.0], l))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_single_space_separated_line() {
        let d = parse_ucr("1 0.1 -0.2").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.samples()[0].label, 1);
        assert_eq!(d.samples()[0].values, vec![0.1, -0.2]);
        assert_eq!(d.series_len(), 2);
    }

    #[test]
    fn accepts_tabs_commas_spaces_and_float_labels() {
        let text = "-1\t1.5\t2.5\n1,3.0,4.0\n  -1.0000000e+00   5.0  6.0\n\n";
        let d = parse_ucr(text).unwrap();
        assert_eq!(d.labels().collect::<Vec<_>>(), vec![-1, 1, -1]);
        assert_eq!(d.samples()[2].values, vec![5.0, 6.0]);
    }

    #[test]
    fn ragged_lines_name_the_offending_line() {
        let mut text = String::from("1");
        text.push_str(&" 0.0".repeat(97));
        text.push_str("\n-1");
        text.push_str(&" 0.0".repeat(95));
        match parse_ucr(&text) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_and_empty_input() {
        assert!(matches!(
            parse_ucr("1 0.5 abc"),
            Err(Error::Parse { line: 1, field: 3, .. })
        ));
        assert!(matches!(parse_ucr("x 0.5"), Err(Error::Parse { field: 1, .. })));
        assert!(matches!(parse_ucr(""), Err(Error::EmptyInput)));
        assert!(matches!(parse_ucr("\n \n"), Err(Error::EmptyInput)));
    }

    #[test]
    fn remap_minus_one_to_zero() {
        let d = remap_labels(ds(&[-1, 1, -1])).unwrap();
        assert_eq!(d.labels().collect::<Vec<_>>(), vec![0, 1, 0]);
        assert_eq!(d.class_count(), 2);
        assert_eq!(d.samples()[0].values, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn remap_is_identity_on_index_labels() {
        let d = remap_labels(ds(&[0, 1])).unwrap();
        assert_eq!(d.labels().collect::<Vec<_>>(), vec![0, 1]);
        let again = remap_labels(d.clone()).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn remap_rejects_other_labels() {
        assert!(matches!(remap_labels(ds(&[0, 2])), Err(Error::UnsupportedLabel(2))));
    }

    #[test]
    fn znormalize_small_vector() {
        // sigma = sqrt(2/3), so (x - 2) / sigma = -/+ sqrt(3/2).
        let z = znormalize(&[1.0, 2.0, 3.0]);
        let k = 1.5f64.sqrt();
        assert!(!z.degenerate);
        for (got, want) in z.values.iter().zip([-k, 0.0, k]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((k - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn znormalize_flat_series_is_flagged() {
        let z = znormalize(&[5.0, 5.0, 5.0]);
        assert!(z.degenerate);
        assert_eq!(z.values, vec![0.0; 3]);
    }

    #[test]
    fn split_halves_in_file_order() {
        let d = Dataset::new(
            (0..100)
                .map(|i| TimeSeriesSample::new(vec![i as f64, 0.0], i % 2))
                .collect(),
        )
        .unwrap();
        let (a, b) = split_test(&d).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(b.len(), 50);
        assert_eq!(a.samples()[0].values[0], 0.0);
        assert_eq!(a.samples()[49].values[0], 49.0);
        assert_eq!(b.samples()[0].values[0], 50.0);
        assert_eq!(b.samples()[49].values[0], 99.0);

        let (a, b) = split_test(&ds(&[0, 1])).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        assert_eq!(a.samples()[0].label, 0);
        assert_eq!(b.samples()[0].label, 1);
    }

    #[test]
    fn split_rejects_odd_count() {
        let d = Dataset::new(vec![TimeSeriesSample::new(vec![1.0], 0); 99]).unwrap();
        assert!(matches!(split_test(&d), Err(Error::Split(99))));
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 2..64)
    }

    fn dataset() -> impl Strategy<Value = Dataset> {
        (1usize..12, 1usize..16).prop_flat_map(|(n, len)| {
            prop::collection::vec(
                (
                    prop::collection::vec(-1e6f64..1e6, len),
                    prop::sample::select(vec![-1i64, 1]),
                ),
                n,
            )
            .prop_map(|rows| {
                Dataset::new(rows.into_iter().map(|(v, l)| TimeSeriesSample::new(v, l)).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn ucr_text_round_trips(d in dataset()) {
            let back = parse_ucr(&d.to_ucr_text()).unwrap();
            prop_assert_eq!(back, d);
        }

        #[test]
        fn znormalized_moments(x in series()) {
            prop_assume!(population_std(&x) > 1e-3);
            let z = znormalize(&x);
            prop_assert!(mean(&z.values).abs() < 1e-9);
            prop_assert!((population_std(&z.values) - 1.0).abs() < 1e-9);
            let again = znormalize(&z.values);
            for (a, b) in again.values.iter().zip(&z.values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn split_concatenates_back(d in dataset()) {
            prop_assume!(d.len() % 2 == 0);
            let (a, b) = split_test(&d).unwrap();
            let joined: Vec<_> = a.samples().iter().chain(b.samples()).cloned().collect();
            prop_assert_eq!(joined, d.samples().to_vec());
        }

        #[test]
        fn remap_idempotent(d in dataset()) {
            let once = remap_labels(d).unwrap();
            let twice = remap_labels(once.clone()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
