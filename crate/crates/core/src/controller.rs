//! Budget selection and mean-gap bookkeeping.
//!
//! After task `n` the bound `eps_n` on `E[f_n(x_n) - f_n(x*_n)]` turns into a
//! starting distance for task `n + 1` through strong convexity and the
//! drift: `d0 = (sqrt(2 eps_n / m) + rho)^2`. Every policy picks the smallest
//! `K` with `b(d0, K) <= eps`.

use serde::{Deserialize, Serialize};

use crate::gap_bounds::GapBound;
use crate::{Error, Result};

pub const DEFAULT_K_MAX: u64 = 1_000_000;

/// `(sqrt(2 eps / m) + rho)^2`.
pub fn start_distance_sq(eps: f64, rho: f64, m: f64) -> f64 {
    let r = (2.0 * eps / m).sqrt() + rho;
    r * r
}

pub fn propagate_eps(eps_prev: f64, rho: f64, k: u64, bound: &dyn GapBound, m: f64) -> Result<f64> {
    if !(eps_prev >= 0.0) || !(rho >= 0.0) {
        return Err(Error::param(format!("need eps_prev >= 0 and rho >= 0, got {eps_prev}, {rho}")));
    }
    if !(m > 0.0) {
        return Err(Error::param(format!("m must be > 0, got {m}")));
    }
    bound.eval(start_distance_sq(eps_prev, rho, m), k)
}

/// Smallest `K >= 1` with `b(d0, K) <= eps`: doubling from 1, then bisection.
pub fn min_k(bound: &dyn GapBound, d0: f64, eps: f64, k_max: u64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("eps must be > 0, got {eps}")));
    }
    let ok = |k: u64| -> Result<bool> { Ok(bound.eval(d0, k)? <= eps) };
    if ok(1)? {
        return Ok(1);
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    loop {
        if hi >= k_max {
            if ok(k_max)? {
                hi = k_max;
                break;
            }
            return Err(Error::Infeasible { eps, k_max });
        }
        if ok(hi)? {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    // invariant: !ok(lo), ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn k_star(eps: f64, rho: f64, bound: &dyn GapBound, m: f64, k_max: u64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("eps must be > 0, got {eps}")));
    }
    min_k(bound, start_distance_sq(eps, rho, m), eps, k_max)
}

pub fn bootstrap(k1: u64, k2: u64, bound: &dyn GapBound, diam_sq: f64) -> Result<(f64, f64)> {
    if k1 == 0 || k2 == 0 {
        return Err(Error::param("bootstrap budgets must be >= 1"));
    }
    Ok((bound.eval(diam_sq, k1)?, bound.eval(diam_sq, k2)?))
}

/// `K_n` for the no-update policy: `K*` with the certified drift in place of `rho`.
pub fn choose_k_no_update(rho_certified: f64, eps: f64, bound: &dyn GapBound, m: f64, k_max: u64) -> Result<u64> {
    k_star(eps, rho_certified, bound, m, k_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    KnownRho,
    NoUpdate,
    UpdatePast,
}

/// Budgets and mean-gap bounds so far. `eps[i]` is the current bound for
/// task `i + 1`; under [`Policy::UpdatePast`] entries `3..` are rewritten
/// whenever the drift estimate changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapLedger {
    pub policy: Policy,
    pub eps: Vec<f64>,
    pub k: Vec<u64>,
}

impl GapLedger {
    pub fn new(policy: Policy, k1: u64, k2: u64, bound: &dyn GapBound, diam_sq: f64) -> Result<Self> {
        let (e1, e2) = bootstrap(k1, k2, bound, diam_sq)?;
        Ok(Self { policy, eps: vec![e1, e2], k: vec![k1, k2] })
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }

    pub fn last_eps(&self) -> f64 {
        self.eps[self.eps.len() - 1]
    }

    /// Recomputed bounds `eps_3..eps_{n-1}` from the bootstrap values with a
    /// single drift value. Returns the full vector.
    pub fn recompute(&self, rho: f64, bound: &dyn GapBound, m: f64) -> Result<Vec<f64>> {
        let mut out = self.eps[..2].to_vec();
        for i in 2..self.k.len() {
            let prev = out[i - 1];
            out.push(propagate_eps(prev, rho, self.k[i], bound, m)?);
        }
        Ok(out)
    }

    /// Choose `K` for the next task from the drift value `rho`, which is the
    /// true drift under [`Policy::KnownRho`] and `rho_hat + t` otherwise, then
    /// record the budget and its propagated bound.
    pub fn advance(&mut self, rho: f64, eps: f64, bound: &dyn GapBound, m: f64, k_max: u64) -> Result<u64> {
        let k = match self.policy {
            Policy::KnownRho | Policy::NoUpdate => {
                let k = k_star(eps, rho, bound, m, k_max)?;
                let e = propagate_eps(self.last_eps(), rho, k, bound, m)?;
                self.eps.push(e);
                k
            }
            Policy::UpdatePast => {
                let mut past = self.recompute(rho, bound, m)?;
                let anchor = past[past.len() - 1].max(eps);
                let k = min_k(bound, start_distance_sq(anchor, rho, m), eps, k_max)?;
                past.push(propagate_eps(past[past.len() - 1], rho, k, bound, m)?);
                self.eps = past;
                k
            }
        };
        self.k.push(k);
        Ok(k)
    }
}

/// `K_n` under the update-past policy without mutating the ledger.
pub fn choose_k_update_past(
    ledger: &GapLedger,
    rho_certified: f64,
    eps: f64,
    bound: &dyn GapBound,
    m: f64,
    k_max: u64,
) -> Result<u64> {
    if ledger.n() < 2 {
        return Err(Error::Precondition("ledger needs the two bootstrap entries".into()));
    }
    let past = ledger.recompute(rho_certified, bound, m)?;
    let anchor = past[past.len() - 1].max(eps);
    min_k(bound, start_distance_sq(anchor, rho_certified, m), eps, k_max)
}

/// `phi(v) = alpha (sqrt(2 v / m) + rho)^2 + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiMap {
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
    pub rho: f64,
}

impl PhiMap {
    pub fn new(alpha: f64, beta: f64, m: f64, rho: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && rho >= 0.0) || !(m > 0.0) {
            return Err(Error::param(format!(
                "phi map needs alpha, beta, rho >= 0 and m > 0, got {alpha}, {beta}, {rho}, {m}"
            )));
        }
        Ok(Self { alpha, beta, m, rho })
    }

    pub fn from_bound(bound: &dyn GapBound, k: u64, m: f64, rho: f64) -> Result<Self> {
        let (alpha, beta) = bound.factors(k)?;
        Self::new(alpha, beta, m, rho)
    }

    pub fn admissible(&self) -> bool {
        2.0 * self.alpha / self.m < 1.0
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.alpha * start_distance_sq(v, self.rho, self.m) + self.beta
    }

    pub fn derivative(&self, v: f64) -> f64 {
        let s = (2.0 * v / self.m).sqrt();
        if s == 0.0 {
            return if self.rho == 0.0 { 2.0 * self.alpha / self.m } else { f64::INFINITY };
        }
        (2.0 * self.alpha / self.m) * (1.0 + self.rho / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub v: f64,
    pub derivative: f64,
    /// Iterations of `v <- phi(v)` from the start value until `|phi(v) - v| <= tol`.
    pub iterations: u64,
    /// `beta = rho = 0`: zero is the only fixed point.
    pub degenerate: bool,
}

/// Positive fixed point of `phi`. With `u = sqrt(v)` the equation is the
/// quadratic `(1 - 2a/m) u^2 - 2 a rho sqrt(2/m) u - (a rho^2 + beta) = 0`,
/// whose positive root is taken; plain iteration from `v0` confirms it.
pub fn fixed_point(map: &PhiMap, tol: f64, v0: f64) -> Result<FixedPoint> {
    if !map.admissible() {
        return Err(Error::InadmissibleStep(format!(
            "2 alpha / m = {} >= 1",
            2.0 * map.alpha / map.m
        )));
    }
    if map.beta == 0.0 && map.rho == 0.0 {
        return Ok(FixedPoint { v: 0.0, derivative: map.derivative(0.0), iterations: 0, degenerate: true });
    }
    let a = 1.0 - 2.0 * map.alpha / map.m;
    let b = map.alpha * map.rho * (2.0 / map.m).sqrt();
    let c = map.alpha * map.rho * map.rho + map.beta;
    let u = (b + (b * b + a * c).sqrt()) / a;
    let mut v = u * u;
    // one Newton polish on g(v) = phi(v) - v
    let g = map.eval(v) - v;
    let dg = map.derivative(v) - 1.0;
    if dg != 0.0 && g.abs() > 0.0 {
        let w = v - g / dg;
        if w > 0.0 && (map.eval(w) - w).abs() < g.abs() {
            v = w;
        }
    }
    let mut it = 0u64;
    let mut w = v0.max(0.0);
    const CAP: u64 = 10_000_000;
    while (map.eval(w) - w).abs() > tol && (w - v).abs() > tol {
        w = map.eval(w);
        it += 1;
        if it >= CAP {
            return Err(Error::Precondition(format!("fixed-point iteration did not settle in {CAP} steps")));
        }
    }
    Ok(FixedPoint { v, derivative: map.derivative(v), iterations: it, degenerate: false })
}
