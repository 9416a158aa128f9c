//! The per-seed controller loop and the multi-seed driver.
//!
//! Task `n` is solved from `x_{n-1}` with `K_n` samples. `K_1 = K_2` come
//! from the bootstrap; from `n = 3` on, `K_n` depends only on the certified
//! drift and the parameter estimates available after task `n - 1`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::controller::{min_k, GapLedger, Policy};
use crate::drift::{
    combine_bounded, combine_constant, direct_one_step, ipm_one_step, Certification, DriftMethod, DriftMode,
    OneStepEstimate, ScaledEuclidean, TnSchedule, UniformMax,
};
use crate::gap_bounds::{check_nonincreasing_in_k, Bound, FunctionParams};
use crate::linalg::dot;
use crate::objective::{empirical_loss, FeasibleSet, LossModel, Sample, TaskSequence};
use crate::params::{a_hat, b_hat, big_m_hat_hessian, combine_params, m_big_m_heuristic, m_hat_hessian, quadratic_specific, OneStepParams};
use crate::rng::Stream;
use crate::sgd::run_sgd;
use crate::synth::{make_classification, make_regression_with_noise};
use crate::{Error, Result};

use super::config::{Estimator, PsiConfig, RunConfig, TaskConfig, ESTIMATED_K_INIT};
use super::io::{aggregate, write_aggregate, write_records, write_scores, write_text, write_timing, RunRecord, Score};
use super::replay::{load_csv, PeriodData, ReplaySequence};

/// Task sequence for one seed, with exact constants when the family has them.
pub fn build_task(
    cfg: &RunConfig,
    seed: u64,
    data: Option<&PeriodData>,
) -> Result<(Box<dyn TaskSequence>, Option<FunctionParams>)> {
    match &cfg.task {
        TaskConfig::Regression { d, sigma_w2, lambda, rho, horizon, noise_var } => {
            let s = make_regression_with_noise(*d, *sigma_w2, *lambda, *rho, *horizon, *noise_var, seed)?;
            let p = s.analytic_params(0.0);
            Ok((Box::new(s), Some(p)))
        }
        TaskConfig::Classification { d, sigma2, lambda, horizon, arc_step } => {
            Ok((Box::new(make_classification(*d, *sigma2, *lambda, *horizon, *arc_step, seed)?), None))
        }
        TaskConfig::Csv { loss, lambda, test_fraction, .. } => {
            let data = data.ok_or_else(|| Error::Config("replay data not loaded".into()))?;
            Ok((Box::new(ReplaySequence::new(data, *loss, *lambda, *test_fraction, seed)?), None))
        }
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<Option<PeriodData>> {
    match &cfg.task {
        TaskConfig::Csv { path, period_column, feature_columns, target_column, loss, .. } => {
            Ok(Some(load_csv(path, period_column, feature_columns, target_column, *loss)?))
        }
        _ => Ok(None),
    }
}

fn task_lambda(cfg: &RunConfig) -> f64 {
    match &cfg.task {
        TaskConfig::Regression { lambda, .. }
        | TaskConfig::Classification { lambda, .. }
        | TaskConfig::Csv { lambda, .. } => *lambda,
    }
}

/// One task's `(m, M, A, B)` estimate. `A` is evaluated at `x`, which must not
/// depend on the batch, with the previous adjusted curvature pair.
fn one_step_params(
    cfg: &RunConfig,
    estimator: Estimator,
    model: &dyn LossModel,
    batch: &[Sample],
    set: &FeasibleSet,
    x: &[f64],
    prev: Option<(f64, f64)>,
) -> Result<OneStepParams> {
    let (m, big_m) = match estimator {
        Estimator::HessianGrid | Estimator::HessianEigen => (
            m_hat_hessian(model, batch, set, estimator.probe())?,
            big_m_hat_hessian(model, batch, set, estimator.probe())?,
        ),
        Estimator::Heuristic => m_big_m_heuristic(model, batch, &set.probe_points())?,
        Estimator::Quadratic => quadratic_specific(batch, task_lambda(cfg))?,
    };
    let (pm, pbig) = prev.unwrap_or((m, big_m));
    Ok(OneStepParams { m, big_m, a: a_hat(model, x, batch, pm, pbig)?, b: b_hat(big_m.max(0.0))? })
}

fn test_batch(cfg: &RunConfig, task: &dyn TaskSequence, n: usize, seed: u64) -> Vec<Sample> {
    match task.holdout(n) {
        Some(h) => h.to_vec(),
        None => (0..cfg.test_batch as u64).map(|k| task.sample(Stream::Test, n, k, seed)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub scores: Vec<Score>,
    /// The error that stopped the run early, if any; `records` holds the completed tasks.
    pub error: Option<Error>,
}

pub fn run_seed(cfg: &RunConfig, seed: u64, data: Option<&PeriodData>) -> SeedOutcome {
    let mut out = SeedOutcome { seed, records: Vec::new(), scores: Vec::new(), error: None };
    if let Err(e) = seed_loop(cfg, seed, data, &mut out) {
        out.error = Some(e);
    }
    out
}

fn seed_loop(cfg: &RunConfig, seed: u64, data: Option<&PeriodData>, out: &mut SeedOutcome) -> Result<()> {
    let (task, analytic) = build_task(cfg, seed, data)?;
    let task = task.as_ref();
    let model = task.model();
    let d = model.dim();
    let set = cfg.set.build(d)?;
    let diam_sq = set.diam_sq();
    let diam = diam_sq.sqrt();
    let x0 = set.center();
    let eps = cfg.epsilon;
    let horizon = task.horizon();
    let c_g = cfg.drift.c_g.unwrap_or(0.0);

    let known = match cfg.psi {
        PsiConfig::Analytic {} => analytic.map(|p| FunctionParams { diam_sq, c_g, ..p }),
        PsiConfig::Fixed { m, big_m, a, b, c_g } => Some(FunctionParams { m, big_m, a, b, c_g, diam_sq }),
        PsiConfig::Estimated { .. } => None,
    };
    let (estimator, psi_tn) = match cfg.psi {
        PsiConfig::Estimated { estimator, tn } => (estimator, tn),
        _ => (Estimator::HessianGrid, TnSchedule::default()),
    };
    let declared_rho = cfg.policy.rho.or(task.declared_rho());

    let mut psi_hist: Vec<OneStepParams> = Vec::new();
    let mut one_step: Vec<OneStepEstimate> = Vec::new();
    let mut budgets: Vec<u64> = Vec::new();
    let mut ledger: Option<GapLedger> = None;
    let mut k_init = 0;
    let mut first_bound: Option<Bound> = None;
    let mut last_certified: Option<f64> = None;
    let mut x_prev = x0.clone();
    let mut prev_batch: Vec<Sample> = Vec::new();

    for n in 1..=horizon {
        let t0 = Instant::now();
        let params = match known {
            Some(p) => p,
            None => {
                if n == 1 {
                    // task 1 has no predecessor: its own bootstrap batch seeds the estimates
                    let k1 = cfg.policy.k_init.unwrap_or(ESTIMATED_K_INIT);
                    let batch: Vec<Sample> = (0..k1).map(|k| task.sample(Stream::Train, 1, k, seed)).collect();
                    psi_hist.push(one_step_params(cfg, estimator, model, &batch, &set, &x0, None)?);
                }
                combine_params(&psi_hist, &psi_tn)?.function_params(c_g, diam_sq)?
            }
        };
        let bound = cfg.step.bound(cfg.bound.kind, params, eps)?;

        if n == 1 {
            check_nonincreasing_in_k(&bound, diam_sq, cfg.k_max)?;
            k_init = match (cfg.policy.k_init, known) {
                (Some(k), _) => k,
                (None, Some(_)) => min_k(&bound, diam_sq, eps, cfg.k_max)?,
                (None, None) => ESTIMATED_K_INIT,
            };
            ledger = Some(GapLedger::new(cfg.policy.kind, k_init, k_init, &bound, diam_sq)?);
            first_bound = Some(bound);
        }
        let ledger = ledger.as_mut().expect("created at n = 1");
        let (k, eps_hat) = if n <= 2 {
            (k_init, ledger.eps[n - 1])
        } else {
            let rho = match cfg.policy.kind {
                Policy::KnownRho => declared_rho.expect("checked by config validation"),
                _ => last_certified.expect("available after task 2"),
            };
            let k = ledger.advance(rho, eps, &bound, params.m, cfg.k_max)?;
            (k, ledger.last_eps())
        };
        budgets.push(k);

        let mut draw = |l: u64| task.sample(Stream::Train, n, l, seed);
        let sgd = run_sgd(model, &mut draw, &x_prev, k, bound.schedule, bound.averaging(), &set)?;
        let x_n = sgd.x_hat;

        let (rho_hat, rho_certified) = if n >= 2 {
            let est = match cfg.drift.method {
                DriftMethod::Direct => {
                    direct_one_step(model, &x_n, &x_prev, &sgd.batch, &prev_batch, params.m, diam, n)?
                }
                DriftMethod::Ipm => ipm_one_step(
                    &sgd.batch,
                    &prev_batch,
                    &ScaledEuclidean(cfg.drift.metric_scale),
                    params.m,
                    diam,
                    n,
                )?,
            };
            one_step.push(est);
            let cert = cfg.drift.certified.then(|| Certification {
                c_g,
                l_g: cfg.drift.l_g.unwrap_or(params.big_m),
                d,
            });
            let de = match cfg.drift.mode {
                DriftMode::Constant => {
                    combine_constant(&one_step, &budgets, cert.as_ref(), &bound, params.m, diam_sq, &cfg.drift.tn)?
                }
                DriftMode::Bounded { w } => {
                    // corrections need n > W; before that only the slack is added
                    let cert = if n > w { cert } else { None };
                    combine_bounded(
                        &one_step,
                        &UniformMax { w },
                        &budgets,
                        cert.as_ref(),
                        &bound,
                        params.m,
                        diam_sq,
                        &cfg.drift.tn,
                    )?
                }
            };
            last_certified = Some(de.certified);
            (Some(de.rho_hat), Some(de.certified))
        } else {
            (None, None)
        };

        if known.is_none() && n >= 2 {
            let prev = combine_params(&psi_hist, &psi_tn)?.adjusted;
            psi_hist.push(one_step_params(cfg, estimator, model, &sgd.batch, &set, &x_prev, Some((prev.m, prev.big_m)))?);
        }

        let test = test_batch(cfg, task, n, seed);
        let test_loss = if test.is_empty() { None } else { Some(empirical_loss(model, &x_n, &test)?) };
        if cfg.task.is_classifier() {
            for z in &test {
                out.scores.push(Score { seed, n, label: z[d], score: dot(&z[..d], &x_n) });
            }
        }
        out.records.push(RunRecord {
            seed,
            n,
            k,
            rho_hat,
            rho_certified,
            eps_hat,
            gap: task.exact_gap(n, &x_n),
            test_loss,
            test_loss_upfront: None,
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
        x_prev = x_n;
        prev_batch = sgd.batch;
    }

    // comparison arm: every sample spent on task 1 up front
    if let Some(b) = first_bound {
        let total: u64 = budgets.iter().sum();
        let mut draw = |l: u64| task.sample(Stream::Upfront, 1, l, seed);
        let up = run_sgd(model, &mut draw, &x0, total, b.schedule, b.averaging(), &set)?;
        for r in out.records.iter_mut() {
            let test = test_batch(cfg, task, r.n, seed);
            if !test.is_empty() {
                r.test_loss_upfront = Some(empirical_loss(model, &up.x_hat, &test)?);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub outcomes: Vec<SeedOutcome>,
}

impl RunSummary {
    pub fn records(&self) -> Vec<RunRecord> {
        self.outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect()
    }

    pub fn first_error(&self) -> Option<&Error> {
        self.outcomes.iter().find_map(|o| o.error.as_ref())
    }
}

/// Runs every seed on a pool of `workers` threads (0 = all cores) without
/// writing anything.
pub fn run_in_memory(cfg: &RunConfig, workers: usize) -> Result<Vec<SeedOutcome>> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    Ok(pool.install(|| seeds.par_iter().map(|&s| run_seed(cfg, s, data.as_ref())).collect()))
}

/// Runs and writes `out_dir`: `config.toml`, `seed_{s}.csv`,
/// `timing_seed{s}.csv`, `scores_seed{s}.csv` (classifiers) and
/// `aggregate.csv`. Partial results are written before an error is returned.
pub fn run_to_dir(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<RunSummary> {
    let outcomes = run_in_memory(cfg, workers)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    write_text(&out_dir.join("config.toml"), &cfg.to_toml()?)?;
    for o in &outcomes {
        write_records(&out_dir.join(format!("seed_{}.csv", o.seed)), &o.records)?;
        write_timing(&out_dir.join(format!("timing_seed{}.csv", o.seed)), &o.records)?;
        if cfg.task.is_classifier() {
            write_scores(&out_dir.join(format!("scores_seed{}.csv", o.seed)), &o.scores)?;
        }
    }
    let all: Vec<RunRecord> = outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
    write_aggregate(&out_dir.join("aggregate.csv"), &aggregate(&all))?;
    let summary = RunSummary { dir: out_dir.to_path_buf(), outcomes };
    match summary.first_error() {
        Some(e) => Err(e.clone()),
        None => Ok(summary),
    }
}
