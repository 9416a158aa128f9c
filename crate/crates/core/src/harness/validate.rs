//! Monte Carlo check that each bound dominates the realized mean gap on a
//! separable quadratic with known constants, plus a control run in which the
//! true curvature is half of what the bound assumes.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gap_bounds::{Bound, BoundKind, FunctionParams, GapBound};
use crate::objective::{DiagonalQuadratic, FeasibleSet};
use crate::rng::{rng_for, Stream};
use crate::sgd::{run_sgd, StepSchedule};
use crate::{Error, Result};

use super::io::{moment, write_text};

fn default_ks() -> Vec<u64> {
    vec![10, 100, 1000]
}
fn default_reps() -> usize {
    1000
}
fn default_kinds() -> Vec<BoundKind> {
    vec![BoundKind::LastIterate, BoundKind::ConstStepAvg, BoundKind::NedicLeeAvg, BoundKind::QuadraticAvg]
}
fn default_true() -> bool {
    true
}
fn default_h() -> Vec<f64> {
    vec![1.0, 1.2]
}
fn default_sigma2() -> f64 {
    0.01
}
fn default_d0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "default_ks")]
    pub ks: Vec<u64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<BoundKind>,
    /// Also run the halved-curvature control.
    #[serde(default = "default_true")]
    pub control: bool,
    #[serde(default)]
    pub seed: u64,
    /// Curvatures `h_j` of `1/2 sum h_j (x_j - z_j)^2`.
    #[serde(default = "default_h")]
    pub h: Vec<f64>,
    /// Per-coordinate variance of `z` around the minimizer.
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    /// Initial squared distance, placed along the first coordinate.
    #[serde(default = "default_d0")]
    pub d0: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            ks: default_ks(),
            reps: default_reps(),
            kinds: default_kinds(),
            control: true,
            seed: 0,
            h: default_h(),
            sigma2: default_sigma2(),
            d0: default_d0(),
        }
    }
}

impl ValidateConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let c: Self = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.is_empty() || self.h.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("h must be nonempty and positive".into()));
        }
        if !(self.sigma2 >= 0.0) || !(self.d0 >= 0.0) {
            return Err(Error::Config("sigma2 and d0 must be >= 0".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::Config("budgets must be >= 1".into()));
        }
        if self.reps < 2 && !self.ks.is_empty() && !self.kinds.is_empty() {
            return Err(Error::Config("need at least 2 replicates".into()));
        }
        Ok(())
    }

    /// Nominal constants: `m = min h`, `M = max h`, `B = M^2`, `A = sigma2 sum h^2`.
    pub fn params(&self) -> FunctionParams {
        let m = self.h.iter().copied().fold(f64::INFINITY, f64::min);
        let big_m = self.h.iter().copied().fold(0.0, f64::max);
        FunctionParams {
            m,
            big_m,
            a: self.sigma2 * self.h.iter().map(|h| h * h).sum::<f64>(),
            b: big_m * big_m,
            c_g: 0.0,
            diam_sq: 0.0,
        }
    }
}

/// The schedule each kind is checked under.
pub fn dominance_bound(kind: BoundKind, p: FunctionParams) -> Result<Bound> {
    let s = match kind {
        BoundKind::LastIterate | BoundKind::ConstStepAvg => StepSchedule::Constant { mu: 0.05 },
        BoundKind::NedicLeeAvg => StepSchedule::InverseStrong { m: p.m },
        BoundKind::QuadraticAvg => StepSchedule::Power { c: 0.5, alpha: 0.75 },
        BoundKind::ClosedFormD => StepSchedule::Power { c: 0.5, alpha: 1.0 },
    };
    Bound::new(kind, s, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceRow {
    pub kind: BoundKind,
    pub k: u64,
    /// `"nominal"` or `"halved_m"`.
    pub arm: &'static str,
    pub mean_gap: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

fn gap_sample(bound: &Bound, h_true: &[f64], cfg: &ValidateConfig, k: u64, mut rng: ChaCha8Rng) -> Result<f64> {
    let d = h_true.len();
    let model = DiagonalQuadratic { h: h_true.to_vec() };
    let radius = 10.0 * (1.0 + cfg.d0.sqrt());
    let set = FeasibleSet::origin_ball(d, radius)?;
    let mut x0 = vec![0.0; d];
    x0[0] = cfg.d0.sqrt();
    let s = cfg.sigma2.sqrt();
    let mut draw = |_: u64| -> Vec<f64> { (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect() };
    let out = run_sgd(&model, &mut draw, &x0, k, bound.schedule, bound.averaging(), &set)?;
    Ok(0.5 * out.x_hat.iter().zip(h_true).map(|(x, h)| h * x * x).sum::<f64>())
}

pub fn validate_bounds(cfg: &ValidateConfig) -> Result<Vec<DominanceRow>> {
    cfg.validate()?;
    let p = cfg.params();
    let mut arms: Vec<(&'static str, Vec<f64>)> = vec![("nominal", cfg.h.clone())];
    if cfg.control {
        arms.push(("halved_m", cfg.h.iter().map(|h| 0.5 * h).collect()));
    }
    let mut rows = Vec::new();
    for (ki, &kind) in cfg.kinds.iter().enumerate() {
        let bound = dominance_bound(kind, p)?;
        for &k in &cfg.ks {
            let b = bound.eval(cfg.d0, k)?;
            for (ai, (arm, h)) in arms.iter().enumerate() {
                let gaps: Vec<f64> = (0..cfg.reps as u64)
                    .into_par_iter()
                    .map(|rep| {
                        let rng = rng_for(cfg.seed, Stream::Aux(100 * ki as u64 + ai as u64), k, rep);
                        gap_sample(&bound, h, cfg, k, rng)
                    })
                    .collect::<Result<_>>()?;
                let mo = moment(&gaps).expect("reps >= 2");
                rows.push(DominanceRow {
                    kind,
                    k,
                    arm,
                    mean_gap: mo.mean,
                    se: mo.se,
                    bound: b,
                    pass: mo.mean <= b + 3.0 * mo.se,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_report(path: &Path, rows: &[DominanceRow]) -> Result<()> {
    let mut t = String::from("kind,k,arm,mean_gap,se,bound,pass\n");
    for r in rows {
        t.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.kind.name(),
            r.k,
            r.arm,
            r.mean_gap,
            r.se,
            r.bound,
            r.pass
        ));
    }
    write_text(path, &t)
}
