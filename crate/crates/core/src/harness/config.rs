//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{Policy, DEFAULT_K_MAX};
use crate::drift::{DriftMethod, DriftMode, TnSchedule};
use crate::gap_bounds::{Bound, BoundKind, FunctionParams};
use crate::objective::FeasibleSet;
use crate::params::Probe;
use crate::sgd::StepSchedule;
use crate::{Error, Result};

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}
fn default_k_max() -> u64 {
    DEFAULT_K_MAX
}
fn default_test_batch() -> usize {
    1000
}
fn default_one() -> f64 {
    1.0
}
fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Target mean gap.
    pub epsilon: f64,
    #[serde(default = "default_k_max")]
    pub k_max: u64,
    /// Fresh test samples per task for synthetic families.
    #[serde(default = "default_test_batch")]
    pub test_batch: usize,
    pub task: TaskConfig,
    pub set: SetConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub psi: PsiConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Quadratic,
    Hinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Regression {
        d: usize,
        sigma_w2: f64,
        lambda: f64,
        rho: f64,
        horizon: usize,
        #[serde(default = "default_one")]
        noise_var: f64,
    },
    Classification {
        d: usize,
        sigma2: f64,
        lambda: f64,
        horizon: usize,
        arc_step: f64,
    },
    Csv {
        path: PathBuf,
        period_column: String,
        feature_columns: Vec<String>,
        target_column: String,
        loss: LossKind,
        lambda: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

impl TaskConfig {
    pub fn dim(&self) -> usize {
        match self {
            TaskConfig::Regression { d, .. } | TaskConfig::Classification { d, .. } => *d,
            TaskConfig::Csv { feature_columns, .. } => feature_columns.len(),
        }
    }

    pub fn declared_rho(&self) -> Option<f64> {
        match self {
            TaskConfig::Regression { rho, .. } => Some(*rho),
            _ => None,
        }
    }

    /// Whether outputs are scored as binary classifiers.
    pub fn is_classifier(&self) -> bool {
        matches!(
            self,
            TaskConfig::Classification { .. } | TaskConfig::Csv { loss: LossKind::Hinge, .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Ball {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl SetConfig {
    pub fn build(&self, d: usize) -> Result<FeasibleSet> {
        let set = match self {
            SetConfig::Ball { radius, center } => {
                FeasibleSet::new_ball(center.clone().unwrap_or_else(|| vec![0.0; d]), *radius)?
            }
            SetConfig::Box { lower, upper } => FeasibleSet::new_box(lower.clone(), upper.clone())?,
        };
        if set.dim() != d {
            return Err(Error::Config(format!("feasible set has dimension {}, task has {d}", set.dim())));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kind: BoundKind,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { kind: BoundKind::LastIterate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepConfig {
    /// Chosen from `psi` and the target; see [`StepConfig::resolve`].
    #[default]
    Auto,
    Constant {
        mu: f64,
    },
    Power {
        c: f64,
        alpha: f64,
    },
    /// `1 / (m l)` with `m` taken from `psi`.
    InverseStrong,
}

impl StepConfig {
    /// Step schedule for a bound kind under constants `p` and target `eps`.
    ///
    /// `auto` picks, for constant-step kinds, `mu = 2 m eps / (M A + eps B)`
    /// (the step that balances the noise floor `M A mu / (4 m)` against the
    /// target), capped at `m / B` and `1 / (2 m)` so the contraction factor
    /// stays in `[0, 1)`. Decreasing-step kinds use `1 / (m l)` (Nedic-Lee)
    /// or `c l^(-3/4)` with `c` under the same caps.
    pub fn resolve(&self, kind: BoundKind, p: &FunctionParams, eps: f64) -> StepSchedule {
        let cap = {
            let c = 0.5 / p.m;
            if p.b > 0.0 { c.min(p.m / p.b) } else { c }
        };
        match *self {
            StepConfig::Constant { mu } => StepSchedule::Constant { mu },
            StepConfig::Power { c, alpha } => StepSchedule::Power { c, alpha },
            StepConfig::InverseStrong => StepSchedule::InverseStrong { m: p.m },
            StepConfig::Auto => match kind {
                BoundKind::LastIterate | BoundKind::ConstStepAvg => {
                    let den = p.big_m * p.a + eps * p.b;
                    let mu = if den > 0.0 { 2.0 * p.m * eps / den } else { cap };
                    // strictly inside the cap keeps the averaging factor in (0, 1)
                    StepSchedule::Constant { mu: mu.min(0.999 * cap) }
                }
                BoundKind::NedicLeeAvg => StepSchedule::InverseStrong { m: p.m },
                BoundKind::QuadraticAvg | BoundKind::ClosedFormD => {
                    StepSchedule::Power { c: 0.999 * cap, alpha: 0.75 }
                }
            },
        }
    }

    pub fn bound(&self, kind: BoundKind, p: FunctionParams, eps: f64) -> Result<Bound> {
        Bound::new(kind, self.resolve(kind, &p, eps), p)
    }
}

fn default_metric_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default = "default_method")]
    pub method: DriftMethod,
    #[serde(default = "default_mode")]
    pub mode: DriftMode,
    /// Add the certified correction terms (direct estimator only).
    #[serde(default)]
    pub certified: bool,
    #[serde(default)]
    pub tn: TnSchedule,
    /// Scale `L` of the IPM sample metric `L |z - z~|`.
    #[serde(default = "default_metric_scale")]
    pub metric_scale: f64,
    /// Sub-Gaussian gradient-noise constant for the certified corrections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_g: Option<f64>,
    /// Gradient Lipschitz constant for the certified corrections; defaults to `M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_g: Option<f64>,
}

fn default_method() -> DriftMethod {
    DriftMethod::Direct
}
fn default_mode() -> DriftMode {
    DriftMode::Constant
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            mode: default_mode(),
            certified: false,
            tn: TnSchedule::default(),
            metric_scale: 1.0,
            c_g: None,
            l_g: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    HessianGrid,
    HessianEigen,
    Heuristic,
    Quadratic,
}

impl Estimator {
    pub fn probe(self) -> Probe {
        match self {
            Estimator::HessianEigen => Probe::eigen_default(),
            _ => Probe::Grid,
        }
    }
}

fn default_estimator() -> Estimator {
    Estimator::HessianGrid
}
fn default_psi_tn() -> TnSchedule {
    TnSchedule { c: 0.01, eta: 0.375 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiConfig {
    /// Exact constants of the synthetic regression family.
    Analytic {},
    Fixed {
        m: f64,
        big_m: f64,
        a: f64,
        b: f64,
        #[serde(default)]
        c_g: f64,
    },
    Estimated {
        #[serde(default = "default_estimator")]
        estimator: Estimator,
        #[serde(default = "default_psi_tn")]
        tn: TnSchedule,
    },
}

impl Default for PsiConfig {
    fn default() -> Self {
        PsiConfig::Estimated { estimator: default_estimator(), tn: default_psi_tn() }
    }
}

fn default_policy() -> Policy {
    Policy::NoUpdate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_policy")]
    pub kind: Policy,
    /// Budget for tasks 1 and 2. Defaults to the smallest `K` with
    /// `b(diam^2, K) <= eps` when `psi` is known, else 100.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_init: Option<u64>,
    /// Drift used by the known-rho policy; defaults to the task's declared rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { kind: default_policy(), k_init: None, rho: None }
    }
}

pub const ESTIMATED_K_INIT: u64 = 100;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return cfg_err(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.k_max == 0 {
            return cfg_err("k_max must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return cfg_err("at least one seed is required".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return cfg_err("seeds must be distinct".into());
        }
        self.set.build(self.task.dim())?;
        self.drift.tn.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let DriftMode::Bounded { w } = self.drift.mode {
            if w == 0 {
                return cfg_err("bounded drift window must be >= 1".into());
            }
        }
        if self.drift.certified {
            if self.drift.method != DriftMethod::Direct {
                return cfg_err("certified corrections apply to the direct estimator only".into());
            }
            if self.drift.c_g.is_none() {
                return cfg_err("certified drift needs drift.c_g".into());
            }
        }
        if !(self.drift.metric_scale > 0.0) {
            return cfg_err("drift.metric_scale must be > 0".into());
        }
        match (&self.psi, &self.task) {
            (PsiConfig::Analytic {}, TaskConfig::Regression { .. }) => {}
            (PsiConfig::Analytic {}, _) => return cfg_err("analytic psi is only available for the regression family".into()),
            (PsiConfig::Fixed { m, big_m, a, b, c_g }, _) => {
                FunctionParams { m: *m, big_m: *big_m, a: *a, b: *b, c_g: *c_g, diam_sq: 1.0 }
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            (PsiConfig::Estimated { estimator, tn }, task) => {
                tn.validate().map_err(|e| Error::Config(e.to_string()))?;
                let quadratic = matches!(
                    task,
                    TaskConfig::Regression { .. } | TaskConfig::Csv { loss: LossKind::Quadratic, .. }
                );
                if *estimator == Estimator::Quadratic && !quadratic {
                    return cfg_err("the closed-form quadratic estimator needs a quadratic loss".into());
                }
            }
        }
        if self.policy.kind == Policy::KnownRho && self.policy.rho.or(self.task.declared_rho()).is_none() {
            return cfg_err("known_rho policy needs policy.rho or a task with a declared rate".into());
        }
        if self.policy.k_init == Some(0) {
            return cfg_err("policy.k_init must be >= 1".into());
        }
        if let TaskConfig::Csv { test_fraction, feature_columns, .. } = &self.task {
            if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                return cfg_err(format!("test_fraction must lie in (0, 1), got {test_fraction}"));
            }
            if feature_columns.is_empty() {
                return cfg_err("at least one feature column is required".into());
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> Option<usize> {
        match self.task {
            TaskConfig::Regression { horizon, .. } | TaskConfig::Classification { horizon, .. } => Some(horizon),
            TaskConfig::Csv { .. } => None,
        }
    }
}

/// Parses `"0..20"`, `"3"` or `"1,4,9"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list {s:?}"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|p| p.trim().parse::<u64>().map_err(|_| bad())).collect()
}
