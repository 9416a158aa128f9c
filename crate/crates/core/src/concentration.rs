//! Tail-bound calculators for sub-Gaussian sums, martingale sequences and
//! sums of W-dependent bounded variables.
//!
//! These evaluate closed forms only; the Monte Carlo checks in the test
//! suite are what establish that they dominate empirical tails.

use crate::{Error, Result};

/// Per-component sub-Gaussian norms `tau_j` of a random vector; `B = sum tau_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubGaussianSpec {
    pub tau: Vec<f64>,
}

impl SubGaussianSpec {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::param("tau values must be finite and >= 0"));
        }
        Ok(Self { tau })
    }

    pub fn b_norm(&self) -> f64 {
        self.tau.iter().sum()
    }
}

/// `B` of the mean of `K` iid vectors whose components all have norm `<= tau`.
pub fn avg_norm_bound(tau: f64, d: usize, k: u64) -> Result<f64> {
    if !(tau >= 0.0) || d == 0 || k == 0 {
        return Err(Error::param("need tau >= 0, d >= 1, K >= 1"));
    }
    Ok(tau * d as f64 / (k as f64).sqrt())
}

/// `P(|V| >= t) <= 2 exp(-t^2 / (2 B^2))`.
pub fn norm_tail(b: f64, t: f64) -> Result<f64> {
    if !(b > 0.0) || !(t >= 0.0) {
        return Err(Error::param("need B > 0 and t >= 0"));
    }
    Ok(2.0 * (-t * t / (2.0 * b * b)).exp())
}

/// Variance proxy `9/c` of a centered variable with tail `2 exp(-c t^2)`.
pub fn mgf_sigma_from_tail(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::param("need c > 0"));
    }
    Ok(9.0 / c)
}

/// Variance proxy `(b - a)^2 / 4` of a variable supported on `[a, b]`.
pub fn hoeffding_sigma(a: f64, b: f64) -> Result<f64> {
    if !(b >= a) {
        return Err(Error::param("need b >= a"));
    }
    Ok((b - a) * (b - a) / 4.0)
}

/// `P(sum a_i V_i >= t) <= exp(-t^2 / (2 nu))`, `nu = sum sigma_i^2 a_i^2`.
pub fn martingale_sum_tail(sigma2: &[f64], a: &[f64], t: f64) -> Result<f64> {
    if sigma2.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: sigma2.len(), got: a.len() });
    }
    if !(t >= 0.0) || sigma2.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::param("need t >= 0 and sigma^2 >= 0"));
    }
    let nu: f64 = sigma2.iter().zip(a).map(|(s, w)| s * w * w).sum();
    if t == 0.0 {
        return Ok(1.0);
    }
    if nu == 0.0 {
        return Ok(0.0);
    }
    Ok((-t * t / (2.0 * nu)).exp())
}

/// Splits `{1..n}` into `W` arithmetic progressions `A_j = {j, j+W, ...}`.
pub fn cover(n: usize, w: usize) -> Result<Vec<Vec<usize>>> {
    if w == 0 || w > n {
        return Err(Error::param(format!("need 1 <= W <= n, got W={w}, n={n}")));
    }
    Ok((1..=w).map(|j| (j..=n).step_by(w).collect()).collect())
}

/// `P(sum (X_i - E X_i) >= t) <= exp(-2 t^2 / (W sum (b_i - a_i)^2))` for
/// variables with ranges `[a_i, b_i]` that are independent at lag `>= W`.
pub fn dependent_hoeffding_tail(ranges: &[(f64, f64)], w: usize, t: f64) -> Result<f64> {
    if w == 0 || !(t >= 0.0) || ranges.iter().any(|(a, b)| !(b >= a)) {
        return Err(Error::param("need W >= 1, t >= 0 and b_i >= a_i"));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let s: f64 = ranges.iter().map(|(a, b)| (b - a) * (b - a)).sum();
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok((-2.0 * t * t / (w as f64 * s)).exp())
}
