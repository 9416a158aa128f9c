//! Feasible sets, loss models, task sequences and batch statistics.

use crate::linalg::{axpy, dist, dot, norm, SymMatrix};
use crate::rng::Stream;
use crate::{Error, Result};

pub type Sample = Vec<f64>;

/// Closed convex set with a cheap Euclidean projection.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl FeasibleSet {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::param("box bounds must be non-empty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::param("box needs finite lower < upper on every axis"));
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param("ball needs a non-empty center and finite radius > 0"));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    /// Box `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(vec![lo; d], vec![hi; d])
    }

    /// Ball of the given radius around the origin.
    pub fn origin_ball(d: usize, radius: f64) -> Result<Self> {
        Self::new_ball(vec![0.0; d], radius)
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::Box { lower, upper } => dist(lower, upper),
            FeasibleSet::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn diam_sq(&self) -> f64 {
        self.diameter().powi(2)
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            FeasibleSet::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()
            }
            FeasibleSet::Ball { center, .. } => center.clone(),
        }
    }

    /// Per-axis half radius used by the symmetric probe design.
    fn half_radius(&self, axis: usize) -> f64 {
        match self {
            FeasibleSet::Box { lower, upper } => 0.25 * (upper[axis] - lower[axis]),
            FeasibleSet::Ball { radius, .. } => 0.5 * radius,
        }
    }

    /// `2d + 1` probe points: the center and the center shifted by plus and
    /// minus half the radius along each axis.
    pub fn probe_points(&self) -> Vec<Vec<f64>> {
        let c = self.center();
        let mut out = vec![c.clone()];
        for axis in 0..self.dim() {
            for sign in [1.0, -1.0] {
                let mut p = c.clone();
                p[axis] += sign * self.half_radius(axis);
                out.push(p);
            }
        }
        out
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
            }
            FeasibleSet::Ball { center, radius } => dist(x, center) <= radius * (1.0 + 1e-12),
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Projection without the dimension check; callers guarantee `x.len() == d`.
    pub fn project_in_place(&self, x: &mut [f64]) {
        match self {
            FeasibleSet::Box { lower, upper } => {
                for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*l, *u);
                }
            }
            FeasibleSet::Ball { center, radius } => {
                let r = dist(x, center);
                if r > *radius {
                    let s = radius / r;
                    for (v, c) in x.iter_mut().zip(center) {
                        *v = c + (*v - c) * s;
                    }
                }
            }
        }
    }
}

/// Per-sample loss `l(x, z)` with its gradient and (optionally) Hessian in `x`.
pub trait LossModel: Send + Sync {
    /// Dimension of the decision variable `x`.
    fn dim(&self) -> usize;

    fn loss(&self, x: &[f64], z: &[f64]) -> f64;

    /// Writes the gradient into `out` (length `dim()`).
    fn grad_into(&self, x: &[f64], z: &[f64], out: &mut [f64]);

    fn grad(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, z, &mut g);
        g
    }

    fn has_hessian(&self) -> bool {
        false
    }

    fn hessian(&self, _x: &[f64], _z: &[f64]) -> Option<SymMatrix> {
        None
    }
}

/// `1/2 (y - w^T x)^2 + 1/2 lambda |x|^2` with `z = (w, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedQuadratic {
    pub d: usize,
    pub lambda: f64,
}

impl LossModel for PenalizedQuadratic {
    fn dim(&self) -> usize {
        self.d
    }

    fn loss(&self, x: &[f64], z: &[f64]) -> f64 {
        let (w, y) = (&z[..self.d], z[self.d]);
        let r = y - dot(w, x);
        0.5 * r * r + 0.5 * self.lambda * dot(x, x)
    }

    fn grad_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        let (w, y) = (&z[..self.d], z[self.d]);
        let r = dot(w, x) - y;
        for i in 0..self.d {
            out[i] = r * w[i] + self.lambda * x[i];
        }
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian(&self, _x: &[f64], z: &[f64]) -> Option<SymMatrix> {
        let mut h = SymMatrix::zeros(self.d);
        h.add_outer(1.0, &z[..self.d]);
        h.add_diag(self.lambda);
        Some(h)
    }
}

/// Squared (smoothed) hinge `1/2 max(0, 1 - y w^T x)^2 + 1/2 lambda |x|^2`,
/// labels `y` in `{-1, +1}`, `z = (w, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedHinge {
    pub d: usize,
    pub lambda: f64,
}

impl SmoothedHinge {
    fn margin(&self, x: &[f64], z: &[f64]) -> f64 {
        (1.0 - z[self.d] * dot(&z[..self.d], x)).max(0.0)
    }
}

impl LossModel for SmoothedHinge {
    fn dim(&self) -> usize {
        self.d
    }

    fn loss(&self, x: &[f64], z: &[f64]) -> f64 {
        let h = self.margin(x, z);
        0.5 * h * h + 0.5 * self.lambda * dot(x, x)
    }

    fn grad_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        let h = self.margin(x, z);
        let y = z[self.d];
        for i in 0..self.d {
            out[i] = -h * y * z[i] + self.lambda * x[i];
        }
    }

    fn has_hessian(&self) -> bool {
        true
    }

    /// Generalized Hessian; the kink at margin exactly 1 takes the inactive branch.
    fn hessian(&self, x: &[f64], z: &[f64]) -> Option<SymMatrix> {
        let mut h = SymMatrix::zeros(self.d);
        if self.margin(x, z) > 0.0 {
            h.add_outer(1.0, &z[..self.d]);
        }
        h.add_diag(self.lambda);
        Some(h)
    }
}

/// `1/2 sum_j h_j (x_j - z_j)^2`: a separable quadratic whose sample is a
/// noisy copy of the minimizer. Used by the bound-dominance suite.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQuadratic {
    pub h: Vec<f64>,
}

impl LossModel for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.h.len()
    }

    fn loss(&self, x: &[f64], z: &[f64]) -> f64 {
        0.5 * self.h.iter().zip(x.iter().zip(z)).map(|(h, (a, b))| h * (a - b) * (a - b)).sum::<f64>()
    }

    fn grad_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        for i in 0..self.h.len() {
            out[i] = self.h[i] * (x[i] - z[i]);
        }
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian(&self, _x: &[f64], _z: &[f64]) -> Option<SymMatrix> {
        let mut m = SymMatrix::zeros(self.h.len());
        for (i, h) in self.h.iter().enumerate() {
            m.set(i, i, *h);
        }
        Some(m)
    }
}

/// A sequence of tasks `n = 1..=horizon` sharing one loss model.
///
/// `sample` must be a pure function of its arguments.
pub trait TaskSequence: Send + Sync {
    fn model(&self) -> &dyn LossModel;

    fn horizon(&self) -> usize;

    fn sample(&self, stream: Stream, n: usize, k: u64, seed: u64) -> Sample;

    /// Analytic minimizer of `f_n`, when available.
    fn minimizer(&self, _n: usize) -> Option<Vec<f64>> {
        None
    }

    /// Exact `f_n(x) - f_n(x*_n)`, when available.
    fn exact_gap(&self, _n: usize, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Fixed held-out batch for task `n`, if the sequence owns one (replay).
    /// Synthetic sequences return `None` and are tested on fresh draws.
    fn holdout(&self, _n: usize) -> Option<&[Sample]> {
        None
    }

    /// Declared drift rate, if known.
    fn declared_rho(&self) -> Option<f64> {
        None
    }
}

/// Mean of `grad(x, z)` over the batch.
pub fn empirical_gradient(model: &dyn LossModel, x: &[f64], batch: &[Sample]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    let mut acc = vec![0.0; model.dim()];
    let mut g = vec![0.0; model.dim()];
    for z in batch {
        model.grad_into(x, z, &mut g);
        axpy(1.0, &g, &mut acc);
    }
    let k = batch.len() as f64;
    acc.iter_mut().for_each(|v| *v /= k);
    Ok(acc)
}

/// Mean of `loss(x, z)` over the batch.
pub fn empirical_loss(model: &dyn LossModel, x: &[f64], batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(batch.iter().map(|z| model.loss(x, z)).sum::<f64>() / batch.len() as f64)
}

/// Mean Hessian over the batch.
pub fn empirical_hessian(model: &dyn LossModel, x: &[f64], batch: &[Sample]) -> Result<SymMatrix> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut acc = SymMatrix::zeros(model.dim());
    for z in batch {
        let h = model.hessian(x, z).ok_or(Error::MissingHessian)?;
        acc.add_scaled(1.0, &h);
    }
    acc.scale(1.0 / batch.len() as f64);
    Ok(acc)
}

/// Largest relative error between `grad` and a central finite difference of
/// `loss` at `x`.
pub fn gradient_fd_error(model: &dyn LossModel, x: &[f64], z: &[f64]) -> f64 {
    let g = model.grad(x, z);
    let scale = 1.0 + norm(&g);
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let fd = (model.loss(&xp, z) - model.loss(&xm, z)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / scale);
    }
    worst
}

/// Largest relative error between `hessian` and central differences of `grad`.
pub fn hessian_fd_error(model: &dyn LossModel, x: &[f64], z: &[f64]) -> Option<f64> {
    let hess = model.hessian(x, z)?;
    let d = x.len();
    let mut scale: f64 = 1.0;
    for i in 0..d {
        for j in 0..d {
            scale = scale.max(hess.get(i, j).abs());
        }
    }
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let gp = model.grad(&xp, z);
        let gm = model.grad(&xm, z);
        for i in 0..d {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            worst = worst.max((fd - hess.get(i, j)).abs() / scale);
        }
    }
    Some(worst)
}
