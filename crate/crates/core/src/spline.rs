//! Not-a-knot cubic spline on unit-spaced knots `0, 1, …, m-1`.
//!
//! The spline is stored through its second derivatives `M_i` at the knots.
//! Interior continuity gives `M_{i-1} + 4 M_i + M_{i+1} = 6 Δ²y_i`; the
//! not-a-knot ends (continuous third derivative at knots 1 and m-2) give
//! `M_0 = 2 M_1 - M_2` and `M_{m-1} = 2 M_{m-2} - M_{m-3}`. Substituting those
//! into the first and last interior rows collapses them to `6 M_1 = 6 Δ²y_1`
//! and `6 M_{m-2} = 6 Δ²y_{m-2}`, leaving a diagonally dominant tridiagonal
//! system.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn not_a_knot(y: &[f64]) -> Result<Self> {
        let m = y.len();
        if m < 4 {
            return Err(Error::Interpolation(m));
        }
        // Unknowns M_1..=M_{m-2}.
        let n = m - 2;
        let rhs: Vec<f64> = (1..m - 1).map(|i| 6.0 * (y[i - 1] - 2.0 * y[i] + y[i + 1])).collect();
        let mut sub = vec![1.0; n];
        let mut diag = vec![4.0; n];
        let mut sup = vec![1.0; n];
        diag[0] = 6.0;
        sup[0] = 0.0;
        diag[n - 1] = 6.0;
        sub[n - 1] = 0.0;
        let inner = solve_tridiagonal(&sub, &diag, &sup, &rhs);

        let mut second = Vec::with_capacity(m);
        second.push(2.0 * inner[0] - inner.get(1).copied().unwrap_or(inner[0]));
        second.extend_from_slice(&inner);
        second.push(2.0 * inner[n - 1] - if n >= 2 { inner[n - 2] } else { inner[0] });
        Ok(Self {
            knots: y.to_vec(),
            second,
        })
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    /// Evaluates at `x`; values outside `[0, m-1]` extrapolate the end cubics.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.knots.len() - 2;
        let i = if x <= 0.0 { 0 } else { (x.floor() as usize).min(last) };
        let t = x - i as f64;
        let u = 1.0 - t;
        let (y0, y1) = (self.knots[i], self.knots[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        u * y0 + t * y1 + ((u * u * u - u) * m0 + (t * t * t - t) * m1) / 6.0
    }
}

/// Thomas algorithm. `sub[0]` and `sup[n-1]` are ignored.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let w = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / w;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / w;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Fits a not-a-knot spline through `segment` at abscissae `0..m` and
/// evaluates it on `target_len` points evenly spanning `[0, m-1]`,
/// endpoints included.
pub fn spline_resample(segment: &[f64], target_len: usize) -> Result<Vec<f64>> {
    if target_len < 2 {
        return Err(Error::param(format!(
            "resample target length must be at least 2, got {target_len}"
        )));
    }
    let spline = CubicSpline::not_a_knot(segment)?;
    let span = (segment.len() - 1) as f64;
    let steps = (target_len - 1) as f64;
    Ok((0..target_len).map(|j| spline.eval(j as f64 * span / steps)).collect())
}
