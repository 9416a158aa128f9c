//! Estimators of `psi = (m, M, A, B)` from task batches and their running
//! combination with the `t_n` adjustment.

use serde::{Deserialize, Serialize};

use crate::drift::{tn, TnSchedule};
use crate::gap_bounds::FunctionParams;
use crate::linalg::{axpy, dot, norm, sub, SymMatrix};
use crate::objective::{empirical_gradient, empirical_hessian, empirical_loss, FeasibleSet, LossModel, Sample};
use crate::{Error, Result};

/// How the Hessian estimators search over `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probe {
    /// Minimum (or maximum) over [`FeasibleSet::probe_points`].
    Grid,
    /// Projected descent on the extreme eigenvalue from the set center.
    EigenDescent { steps: usize, step_frac: f64 },
}

impl Probe {
    pub const fn eigen_default() -> Self {
        Probe::EigenDescent { steps: 25, step_frac: 0.1 }
    }
}

#[derive(Clone, Copy)]
enum Extreme {
    Min,
    Max,
}

fn extreme_eig(h: &SymMatrix, e: Extreme) -> (f64, Vec<f64>) {
    let (vals, vecs) = h.eigen();
    match e {
        Extreme::Min => (vals[0], vecs[0].clone()),
        Extreme::Max => (vals[vals.len() - 1], vecs[vals.len() - 1].clone()),
    }
}

/// `grad_x lambda(T(x))` with `T` the mean Hessian, via `v^T (dT/dx_k) v`
/// and central differences of `T`.
fn eigen_gradient(model: &dyn LossModel, x: &[f64], batch: &[Sample], v: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    let h = 1e-5 * (1.0 + norm(x));
    let mut g = vec![0.0; d];
    let mut xp = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + h;
        let hp = empirical_hessian(model, &xp, batch)?;
        xp[k] = x[k] - h;
        let hm = empirical_hessian(model, &xp, batch)?;
        xp[k] = x[k];
        g[k] = (hp.quad_form(v) - hm.quad_form(v)) / (2.0 * h);
    }
    Ok(g)
}

fn hessian_extreme(
    model: &dyn LossModel,
    batch: &[Sample],
    set: &FeasibleSet,
    probe: Probe,
    which: Extreme,
) -> Result<f64> {
    if !model.has_hessian() {
        return Err(Error::MissingHessian);
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let better = |a: f64, b: f64| match which {
        Extreme::Min => a.min(b),
        Extreme::Max => a.max(b),
    };
    match probe {
        Probe::Grid => {
            let mut best = match which {
                Extreme::Min => f64::INFINITY,
                Extreme::Max => f64::NEG_INFINITY,
            };
            for x in set.probe_points() {
                let (l, _) = extreme_eig(&empirical_hessian(model, &x, batch)?, which);
                best = better(best, l);
            }
            Ok(best)
        }
        Probe::EigenDescent { steps, step_frac } => {
            let sign = match which {
                Extreme::Min => -1.0,
                Extreme::Max => 1.0,
            };
            // Normalized steps; a step that does not improve the eigenvalue is
            // rejected and the length halved.
            let mut eta = step_frac * set.diameter();
            let mut x = set.center();
            let (mut cur, mut v) = extreme_eig(&empirical_hessian(model, &x, batch)?, which);
            for _ in 0..steps {
                let g = eigen_gradient(model, &x, batch, &v)?;
                let gn = norm(&g);
                if gn <= 1e-12 {
                    break;
                }
                let mut y = x.clone();
                axpy(sign * eta / gn, &g, &mut y);
                set.project_in_place(&mut y);
                let (l, w) = extreme_eig(&empirical_hessian(model, &y, batch)?, which);
                if better(l, cur) == l && l != cur {
                    x = y;
                    cur = l;
                    v = w;
                } else {
                    eta *= 0.5;
                }
            }
            Ok(cur)
        }
    }
}

/// `min_x lambda_min` of the batch-mean Hessian.
pub fn m_hat_hessian(model: &dyn LossModel, batch: &[Sample], set: &FeasibleSet, probe: Probe) -> Result<f64> {
    hessian_extreme(model, batch, set, probe, Extreme::Min)
}

/// `max_x lambda_max` of the batch-mean Hessian.
pub fn big_m_hat_hessian(model: &dyn LossModel, batch: &[Sample], set: &FeasibleSet, probe: Probe) -> Result<f64> {
    hessian_extreme(model, batch, set, probe, Extreme::Max)
}

/// Secant curvature ratios of the empirical objective over ordered pairs of
/// distinct probes; returns `(min, max)`.
pub fn m_big_m_heuristic(model: &dyn LossModel, batch: &[Sample], probes: &[Vec<f64>]) -> Result<(f64, f64)> {
    if probes.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 probes, got {}", probes.len())));
    }
    let mut f = Vec::with_capacity(probes.len());
    let mut g = Vec::with_capacity(probes.len());
    for x in probes {
        f.push(empirical_loss(model, x, batch)?);
        g.push(empirical_gradient(model, x, batch)?);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..probes.len() {
        for j in 0..probes.len() {
            if i == j {
                continue;
            }
            let delta = sub(&probes[i], &probes[j]);
            let den = 0.5 * dot(&delta, &delta);
            if den == 0.0 {
                return Err(Error::param(format!("probes {i} and {j} coincide")));
            }
            let ratio = (f[i] - f[j] - dot(&g[j], &delta)) / den;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok((lo, hi))
}

/// `lambda + lambda_min/max((1/K) sum w w^T)` for regression samples `z = (w, y)`.
pub fn quadratic_specific(batch: &[Sample], lambda: f64) -> Result<(f64, f64)> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    if first.len() < 2 {
        return Err(Error::param("regression samples need at least one feature and a response"));
    }
    let d = first.len() - 1;
    let mut c = SymMatrix::zeros(d);
    for z in batch {
        if z.len() != d + 1 {
            return Err(Error::DimensionMismatch { expected: d + 1, got: z.len() });
        }
        c.add_outer(1.0, &z[..d]);
    }
    c.scale(1.0 / batch.len() as f64);
    let (vals, _) = c.eigen();
    Ok((lambda + vals[0], lambda + vals[d - 1]))
}

pub fn b_hat(big_m: f64) -> Result<f64> {
    if !(big_m >= 0.0) {
        return Err(Error::param(format!("M must be >= 0, got {big_m}")));
    }
    Ok(2.0 * big_m * big_m)
}

/// `(2/K) sum |grad l|^2 + 4 (M_prev / m_prev)^2 |mean grad|^2` at `x`, where
/// the curvature pair is the previous step's adjusted estimate.
pub fn a_hat(model: &dyn LossModel, x: &[f64], batch: &[Sample], m_prev_adj: f64, big_m_prev_adj: f64) -> Result<f64> {
    if !(m_prev_adj > 0.0) {
        return Err(Error::param(format!("adjusted m must be > 0, got {m_prev_adj}")));
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sq = 0.0;
    let mut g = vec![0.0; x.len()];
    for z in batch {
        model.grad_into(x, z, &mut g);
        sq += dot(&g, &g);
    }
    let mean = empirical_gradient(model, x, batch)?;
    let ratio = big_m_prev_adj / m_prev_adj;
    Ok(2.0 * sq / batch.len() as f64 + 4.0 * ratio * ratio * dot(&mean, &mean))
}

/// One task's estimates of `(m, M, A, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepParams {
    pub m: f64,
    pub big_m: f64,
    pub a: f64,
    pub b: f64,
}

/// Running means and their `t_n`-adjusted versions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimates {
    pub n: usize,
    pub mean: OneStepParams,
    pub slack: f64,
    pub adjusted: OneStepParams,
}

impl ParamEstimates {
    /// Adjusted values as bound parameters; fails if adjusted `m <= 0`.
    pub fn function_params(&self, c_g: f64, diam_sq: f64) -> Result<FunctionParams> {
        if !(self.adjusted.m > 0.0) {
            return Err(Error::param(format!(
                "adjusted m = {} is not positive at n = {}",
                self.adjusted.m, self.n
            )));
        }
        let p = FunctionParams {
            m: self.adjusted.m,
            big_m: self.adjusted.big_m,
            a: self.adjusted.a,
            b: self.adjusted.b,
            c_g,
            diam_sq,
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn combine_params(history: &[OneStepParams], sched: &TnSchedule) -> Result<ParamEstimates> {
    let n = history.len();
    if n == 0 {
        return Err(Error::Precondition("no parameter estimates yet".into()));
    }
    let nf = n as f64;
    let mean = OneStepParams {
        m: history.iter().map(|p| p.m).sum::<f64>() / nf,
        big_m: history.iter().map(|p| p.big_m).sum::<f64>() / nf,
        a: history.iter().map(|p| p.a).sum::<f64>() / nf,
        b: history.iter().map(|p| p.b).sum::<f64>() / nf,
    };
    let t = tn(sched, n);
    let adjusted = OneStepParams { m: mean.m - t, big_m: mean.big_m + t, a: mean.a + t, b: mean.b + t };
    Ok(ParamEstimates { n, mean, slack: t, adjusted })
}
