//! Drift estimation: one-step estimates `rho_i` of `|x*_i - x*_{i-1}|` and
//! their combination into `rho_hat_n` plus slack and correction terms.
//!
//! The IPM estimate maximizes `|mean_i(alpha) - mean_{i-1}(alpha)|` over
//! vectors `alpha_k` attached to the pooled samples subject to
//! `|alpha_k - alpha_j| <= r(z_k, z_j)`. Projecting any feasible vector
//! solution onto the optimal direction gives a feasible scalar solution with
//! the same value, so the problem is a linear program in one coordinate per
//! sample. The default evaluator is the pairwise relaxation
//! `mean_{k,j} r(z_i(k), z_{i-1}(j))`, which upper-bounds that value.

use serde::{Deserialize, Serialize};

use crate::gap_bounds::GapBound;
use crate::linalg::{dist, norm};
use crate::objective::{empirical_gradient, LossModel, Sample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMethod {
    Direct,
    Ipm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepEstimate {
    pub value: f64,
    pub method: DriftMethod,
    /// Task index `i >= 2`.
    pub index: usize,
}

/// `t_n = c n^(-eta)` with `eta in (0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TnSchedule {
    pub c: f64,
    pub eta: f64,
}

impl TnSchedule {
    pub fn new(c: f64, eta: f64) -> Result<Self> {
        let s = Self { c, eta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::param(format!("t_n scale c must be > 0, got {}", self.c)));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::param(format!("t_n exponent must lie in (0, 1/2), got {}", self.eta)));
        }
        Ok(())
    }

    pub fn at(&self, n: usize) -> f64 {
        tn(self, n)
    }
}

impl Default for TnSchedule {
    fn default() -> Self {
        Self { c: 1.0, eta: 0.375 }
    }
}

pub fn tn(s: &TnSchedule, n: usize) -> f64 {
    debug_assert!(n >= 1);
    s.c * (n as f64).powf(-s.eta)
}

/// Constants needed for the certified corrections of the direct estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    /// Per-component sub-Gaussian constant of the gradient noise.
    pub c_g: f64,
    /// Lipschitz constant of the gradient map used in `C(K)`.
    pub l_g: f64,
    /// Dimension of `x`.
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftMode {
    Constant,
    Bounded { w: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub rho_hat: f64,
    pub mode: DriftMode,
    /// `C_n` (constant) or `U_n` (bounded); zero without certification.
    pub corr_bias: f64,
    /// `C_n^(2)` (constant) or `V_n` (bounded); zero without certification.
    pub corr_noise: f64,
    pub slack: f64,
    pub certified: f64,
}

fn check_batches(a: &[Sample], b: &[Sample]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// `|x_i - x_prev| + (|g_i(x_i)| + |g_prev(x_prev)|) / m`, capped at `diam`.
#[allow(clippy::too_many_arguments)]
pub fn direct_one_step(
    model: &dyn LossModel,
    x_i: &[f64],
    x_prev: &[f64],
    batch_i: &[Sample],
    batch_prev: &[Sample],
    m: f64,
    diam: f64,
    index: usize,
) -> Result<OneStepEstimate> {
    if !(m > 0.0) {
        return Err(Error::param("m must be > 0"));
    }
    check_batches(batch_i, batch_prev)?;
    let gi = norm(&empirical_gradient(model, x_i, batch_i)?);
    let gp = norm(&empirical_gradient(model, x_prev, batch_prev)?);
    let value = direct_value(dist(x_i, x_prev), gi, gp, m, diam);
    Ok(OneStepEstimate { value, method: DriftMethod::Direct, index })
}

/// The direct estimate from its three ingredients.
pub fn direct_value(step: f64, grad_i: f64, grad_prev: f64, m: f64, diam: f64) -> f64 {
    (step + (grad_i + grad_prev) / m).min(diam)
}

/// Metric `r(z, z~)` on samples.
pub trait SampleMetric: Send + Sync {
    fn r(&self, a: &[f64], b: &[f64]) -> f64;
}

/// `scale * |z - z~|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledEuclidean(pub f64);

impl SampleMetric for ScaledEuclidean {
    fn r(&self, a: &[f64], b: &[f64]) -> f64 {
        self.0 * dist(a, b)
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync> SampleMetric for F {
    fn r(&self, a: &[f64], b: &[f64]) -> f64 {
        self(a, b)
    }
}

/// Pairwise relaxation `mean_{k,j} r(z_i(k), z_prev(j))`, before dividing by `m`.
pub fn pairwise_relaxation(batch_i: &[Sample], batch_prev: &[Sample], r: &dyn SampleMetric) -> Result<f64> {
    check_batches(batch_i, batch_prev)?;
    let mut acc = 0.0;
    for a in batch_i {
        for b in batch_prev {
            let v = r.r(a, b);
            if !(v >= 0.0) {
                return Err(Error::param(format!("metric returned {v}")));
            }
            acc += v;
        }
    }
    Ok(acc / (batch_i.len() * batch_prev.len()) as f64)
}

pub fn ipm_one_step(
    batch_i: &[Sample],
    batch_prev: &[Sample],
    r: &dyn SampleMetric,
    m: f64,
    diam: f64,
    index: usize,
) -> Result<OneStepEstimate> {
    if !(m > 0.0) {
        return Err(Error::param("m must be > 0"));
    }
    let gamma = pairwise_relaxation(batch_i, batch_prev, r)?;
    Ok(OneStepEstimate { value: (gamma / m).min(diam), method: DriftMethod::Ipm, index })
}

/// Pooled problem data: coefficients `c_k` (`+1/K_i` then `-1/K_prev`) and the
/// pairwise constraint matrix.
struct Pooled {
    c: Vec<f64>,
    r: Vec<Vec<f64>>,
}

fn pool(batch_i: &[Sample], batch_prev: &[Sample], r: &dyn SampleMetric) -> Result<Pooled> {
    check_batches(batch_i, batch_prev)?;
    let all: Vec<&Sample> = batch_i.iter().chain(batch_prev).collect();
    let n = all.len();
    let mut c = vec![1.0 / batch_i.len() as f64; batch_i.len()];
    c.extend(std::iter::repeat_n(-1.0 / batch_prev.len() as f64, batch_prev.len()));
    let mut rm = vec![vec![0.0; n]; n];
    for k in 0..n {
        for j in 0..n {
            let v = r.r(all[k], all[j]);
            if !(v >= 0.0) {
                return Err(Error::param(format!("metric returned {v}")));
            }
            rm[k][j] = v;
        }
    }
    Ok(Pooled { c, r: rm })
}

/// Exact IPM value divided by `m`, by enumerating the vertices of the scalar
/// linear program. Limited to at most 4 pooled samples.
pub fn ipm_exact_tiny(batch_i: &[Sample], batch_prev: &[Sample], r: &dyn SampleMetric, m: f64) -> Result<f64> {
    let total = batch_i.len() + batch_prev.len();
    if total > 4 {
        return Err(Error::TooLarge(format!("{total} pooled samples, exact oracle handles at most 4")));
    }
    let p = pool(batch_i, batch_prev, r)?;
    let n = p.c.len();
    // A vertex fixes s_0 = 0 and n-1 tight constraints s_a - s_b = +-r_ab that
    // connect all samples; enumerate every signed spanning tree.
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            edges.push((a, b, p.r[a][b].min(p.r[b][a])));
        }
    }
    let mut best: f64 = 0.0;
    let e = edges.len();
    let choose = n - 1;
    let mut idx: Vec<usize> = (0..choose).collect();
    loop {
        for signs in 0..(1u32 << choose) {
            if let Some(s) = solve_tree(n, &idx, &edges, signs) {
                if feasible(&s, &p.r) {
                    let v: f64 = p.c.iter().zip(&s).map(|(c, s)| c * s).sum();
                    best = best.max(v.abs());
                }
            }
        }
        // next combination
        let mut i = choose;
        loop {
            if i == 0 {
                return Ok(best / m);
            }
            i -= 1;
            if idx[i] != i + e - choose {
                break;
            }
            if i == 0 && idx[0] == e - choose {
                return Ok(best / m);
            }
        }
        idx[i] += 1;
        for j in (i + 1)..choose {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn solve_tree(n: usize, idx: &[usize], edges: &[(usize, usize, f64)], signs: u32) -> Option<Vec<f64>> {
    let mut s = vec![f64::NAN; n];
    s[0] = 0.0;
    let mut assigned = 1;
    let mut progress = true;
    while progress && assigned < n {
        progress = false;
        for (bit, &ei) in idx.iter().enumerate() {
            let (a, b, w) = edges[ei];
            let sign = if signs >> bit & 1 == 1 { 1.0 } else { -1.0 };
            if !s[a].is_nan() && s[b].is_nan() {
                s[b] = s[a] - sign * w;
                assigned += 1;
                progress = true;
            } else if s[a].is_nan() && !s[b].is_nan() {
                s[a] = s[b] + sign * w;
                assigned += 1;
                progress = true;
            }
        }
    }
    (assigned == n).then_some(s)
}

fn feasible(s: &[f64], r: &[Vec<f64>]) -> bool {
    let n = s.len();
    for a in 0..n {
        for b in 0..n {
            if (s[a] - s[b]).abs() > r[a][b] * (1.0 + 1e-12) + 1e-12 {
                return false;
            }
        }
    }
    true
}

/// Feasible lower bound on the IPM value (divided by `m`) by projected
/// ascent on the scalar program. After each gradient step the point is made
/// feasible with the McShane map `s_k <- min_j (s_j + D_kj)`, where `D` is
/// the shortest-path closure of `r`.
pub fn ipm_ascent_lower(
    batch_i: &[Sample],
    batch_prev: &[Sample],
    r: &dyn SampleMetric,
    m: f64,
    iters: usize,
) -> Result<f64> {
    let p = pool(batch_i, batch_prev, r)?;
    let n = p.c.len();
    let mut d = p.r.clone();
    for a in 0..n {
        for b in 0..n {
            d[a][b] = d[a][b].min(d[b][a]);
        }
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                if d[a][k] + d[k][b] < d[a][b] {
                    d[a][b] = d[a][k] + d[k][b];
                }
            }
        }
    }
    let scale = d.iter().flatten().fold(0.0f64, |a, b| a.max(*b)).max(1e-300);
    let retract = |s: &mut Vec<f64>| {
        let t = s.clone();
        for k in 0..n {
            s[k] = (0..n).map(|j| t[j] + d[k][j]).fold(f64::INFINITY, f64::min);
        }
    };
    let value = |s: &[f64]| -> f64 { p.c.iter().zip(s).map(|(c, s)| c * s).sum() };
    let mut best: f64 = 0.0;
    for dir in [1.0, -1.0] {
        let mut s = vec![0.0; n];
        let mut eta = scale;
        for it in 0..iters {
            for k in 0..n {
                s[k] += dir * eta * p.c[k] * n as f64;
            }
            retract(&mut s);
            best = best.max(value(&s).abs());
            if it % 20 == 19 {
                eta *= 0.5;
            }
        }
    }
    Ok(best / m)
}

/// `C(K) = 2 sqrt((2/m) b(diam^2, K))`.
pub fn c_of_k(bound: &dyn GapBound, m: f64, diam_sq: f64, k: u64) -> Result<f64> {
    Ok(2.0 * ((2.0 / m) * bound.eval(diam_sq, k)?).sqrt())
}

/// Trapezoid-style weighted sum `f(K_1) + 2 sum_{i=2}^{n-1} f(K_i) + f(K_n)`.
fn end_weighted(budgets: &[u64], mut f: impl FnMut(u64) -> Result<f64>) -> Result<f64> {
    let n = budgets.len();
    let mut acc = 0.0;
    for (i, &k) in budgets.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        acc += w * f(k)?;
    }
    Ok(acc)
}

/// Constant-drift combiner. `history` holds `rho_2..rho_n` and `budgets`
/// holds `K_1..K_n`; `n = budgets.len()`.
pub fn combine_constant(
    history: &[OneStepEstimate],
    budgets: &[u64],
    cert: Option<&Certification>,
    bound: &dyn GapBound,
    m: f64,
    diam_sq: f64,
    tn_sched: &TnSchedule,
) -> Result<DriftEstimate> {
    let n = budgets.len();
    if n < 2 || history.len() != n - 1 {
        return Err(Error::Precondition(format!(
            "need n >= 2 budgets and n - 1 one-step estimates, got {} and {}",
            n,
            history.len()
        )));
    }
    let rho_hat = history.iter().map(|e| e.value).sum::<f64>() / (n - 1) as f64;
    let slack = tn(tn_sched, n);
    let direct = history.iter().all(|e| e.method == DriftMethod::Direct);
    let (corr_bias, corr_noise) = match cert {
        Some(c) if direct => {
            let nf = (n - 1) as f64;
            let noise = end_weighted(budgets, |k| Ok((c.c_g / k as f64).sqrt()))? / (c.d as f64 * m * nf);
            let bias = (1.0 + c.l_g / m) / nf * end_weighted(budgets, |k| c_of_k(bound, m, diam_sq, k))?;
            (bias, noise)
        }
        _ => (0.0, 0.0),
    };
    Ok(DriftEstimate {
        rho_hat,
        mode: DriftMode::Constant,
        corr_bias,
        corr_noise,
        slack,
        certified: rho_hat + corr_bias + corr_noise + slack,
    })
}

/// Window statistic `h_W` over trailing one-step estimates.
pub trait HWindowEstimator: Send + Sync {
    fn w(&self) -> usize;
    fn combine(&self, window: &[f64]) -> f64;
    /// Lipschitz constants `b_1..b_W`.
    fn lipschitz(&self) -> Vec<f64>;
}

/// `((W+1)/W) max(window)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformMax {
    pub w: usize,
}

impl HWindowEstimator for UniformMax {
    fn w(&self) -> usize {
        self.w
    }

    fn combine(&self, window: &[f64]) -> f64 {
        let wf = self.w as f64;
        (wf + 1.0) / wf * window.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn lipschitz(&self) -> Vec<f64> {
        let wf = self.w as f64;
        vec![(wf + 1.0) / wf; self.w]
    }
}

/// Windowed values `rho^(i)` for `i = 2..=n` from one-step values `rho_2..rho_n`.
pub fn windowed(values: &[f64], hw: &dyn HWindowEstimator) -> Vec<f64> {
    (0..values.len())
        .map(|j| {
            let len = hw.w().min(j + 1);
            hw.combine(&values[j + 1 - len..=j])
        })
        .collect()
}

/// Bounded-drift combiner; same indexing as [`combine_constant`].
#[allow(clippy::too_many_arguments)]
pub fn combine_bounded(
    history: &[OneStepEstimate],
    hw: &dyn HWindowEstimator,
    budgets: &[u64],
    cert: Option<&Certification>,
    bound: &dyn GapBound,
    m: f64,
    diam_sq: f64,
    tn_sched: &TnSchedule,
) -> Result<DriftEstimate> {
    let n = budgets.len();
    if n < 2 || history.len() != n - 1 {
        return Err(Error::Precondition(format!(
            "need n >= 2 budgets and n - 1 one-step estimates, got {} and {}",
            n,
            history.len()
        )));
    }
    if hw.w() == 0 {
        return Err(Error::param("window W must be >= 1"));
    }
    let vals: Vec<f64> = history.iter().map(|e| e.value).collect();
    let win = windowed(&vals, hw);
    let rho_hat = win.iter().sum::<f64>() / (n - 1) as f64;
    let slack = tn(tn_sched, n);
    let direct = history.iter().all(|e| e.method == DriftMethod::Direct);
    let (corr_bias, corr_noise) = match cert {
        Some(c) if direct => {
            let w = hw.w();
            if n <= w {
                return Err(Error::Precondition(format!("corrections need n > W, got n={n}, W={w}")));
            }
            let bsum: f64 = hw.lipschitz().iter().sum();
            let denom = (n - w) as f64;
            let mut csum = 0.0;
            let mut gsum = 0.0;
            for &k in budgets {
                csum += c_of_k(bound, m, diam_sq, k)?;
                gsum += (c.c_g / (c.d as f64 * k as f64)).sqrt();
            }
            let u = 2.0 * (1.0 + c.l_g / m) * bsum / denom * csum;
            let v = 2.0 * bsum / (m * denom) * gsum;
            (u, v)
        }
        _ => (0.0, 0.0),
    };
    Ok(DriftEstimate {
        rho_hat,
        mode: DriftMode::Bounded { w: hw.w() },
        corr_bias,
        corr_noise,
        slack,
        certified: rho_hat + corr_bias + corr_noise + slack,
    })
}

/// Largest ratio `|grad l(x, z) - grad l(x, z~)| / r(z, z~)` over sampled pairs;
/// a value `<= 1` is consistent with the gradient class sitting inside the
/// IPM function class at `x`.
pub fn gradient_class_spot_check(
    model: &dyn LossModel,
    x: &[f64],
    samples: &[Sample],
    r: &dyn SampleMetric,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, za) in samples.iter().enumerate() {
        for zb in &samples[a + 1..] {
            let rv = r.r(za, zb);
            let gd = dist(&model.grad(x, za), &model.grad(x, zb));
            if rv > 0.0 {
                worst = worst.max(gd / rv);
            } else if gd > 0.0 {
                return f64::INFINITY;
            }
        }
    }
    worst
}
