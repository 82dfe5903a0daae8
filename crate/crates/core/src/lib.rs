//! Fully convolutional time-series classification with confidence-selective
//! augmentation.
//!
//! A baseline FCN is trained, its least confident predictions on a probe set
//! are found by the probability margin `α = |p0 − p1|`, each of those samples
//! is augmented twice by random window slicing plus cubic-spline upsampling,
//! and the network is retrained from scratch on the expanded training set.

pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod spline;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
