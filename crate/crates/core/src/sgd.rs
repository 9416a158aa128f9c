//! Projected SGD with step-size schedules and iterate averaging.
//!
//! Iteration `l = 0..K-1` draws one sample `z(l)` and sets
//! `x(l+1) = P_X[x(l) - mu(l+1) grad l(x(l), z(l))]`. The returned point is a
//! convex combination of `x(0..=K)` chosen by the [`AveragingScheme`].

use serde::{Deserialize, Serialize};

use crate::objective::{FeasibleSet, LossModel, Sample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `mu(l) = mu`
    Constant { mu: f64 },
    /// `mu(l) = c * l^(-alpha)`
    Power { c: f64, alpha: f64 },
    /// `mu(l) = 1 / (m l)`
    InverseStrong { m: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { mu } if !(mu >= 0.0) || !mu.is_finite() => {
                Err(Error::param(format!("constant step must be finite and >= 0, got {mu}")))
            }
            StepSchedule::Power { c, alpha } if !(c > 0.0) || !(0.0..=1.0).contains(&alpha) => {
                Err(Error::param(format!("power schedule needs c > 0 and alpha in [0,1], got c={c}, alpha={alpha}")))
            }
            StepSchedule::InverseStrong { m } if !(m > 0.0) => {
                Err(Error::param(format!("1/(m l) schedule needs m > 0, got {m}")))
            }
            _ => Ok(()),
        }
    }

    /// Step used by iteration `l >= 1`. `mu(0)` is never used by the update.
    pub fn step(&self, l: u64) -> f64 {
        debug_assert!(l >= 1);
        let lf = l as f64;
        match *self {
            StepSchedule::Constant { mu } => mu,
            StepSchedule::Power { c, alpha } => c * lf.powf(-alpha),
            StepSchedule::InverseStrong { m } => 1.0 / (m * lf),
        }
    }

    pub fn constant_mu(&self) -> Option<f64> {
        match *self {
            StepSchedule::Constant { mu } => Some(mu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AveragingScheme {
    /// `x(K)`
    LastIterate,
    /// `(1/K) sum_{l>=1} x(l)`
    Uniform,
    /// `lambda(l) ∝ factor^(-l)` for `l >= 1`, where `factor = 1 - m mu + B mu^2`.
    Gamma { factor: f64 },
    /// `lambda(l) ∝ 1/mu(l)`, with `mu(0) = 1`.
    InverseStep,
}

impl AveragingScheme {
    /// Gamma weights for a constant step `mu` and constants `m`, `B`.
    pub fn gamma(m: f64, b: f64, mu: f64) -> Result<Self> {
        let factor = 1.0 - m * mu + b * mu * mu;
        let scheme = AveragingScheme::Gamma { factor };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AveragingScheme::Gamma { factor } if !(factor > 0.0) || !factor.is_finite() => Err(
                Error::InadmissibleStep(format!("gamma averaging needs 1 - m mu + B mu^2 > 0, got {factor}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Weights `lambda(0..=K)` of the averaging scheme.
pub fn averaging_weights(scheme: AveragingScheme, schedule: StepSchedule, k: u64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Precondition("K must be >= 1".into()));
    }
    scheme.validate()?;
    schedule.validate()?;
    let n = k as usize + 1;
    let mut w = vec![0.0; n];
    match scheme {
        AveragingScheme::LastIterate => w[n - 1] = 1.0,
        AveragingScheme::Uniform => w[1..].iter_mut().for_each(|v| *v = 1.0 / k as f64),
        AveragingScheme::Gamma { factor } => {
            // factor^(K-l) is proportional to factor^(-l) and does not overflow
            let log_r = factor.ln();
            for l in 1..n {
                w[l] = ((k as f64 - l as f64) * log_r).exp();
            }
            normalize(&mut w);
        }
        AveragingScheme::InverseStep => {
            w[0] = 1.0;
            for l in 1..n {
                w[l] = 1.0 / schedule.step(l as u64);
            }
            normalize(&mut w);
        }
    }
    Ok(w)
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdOutput {
    /// Averaged output `x_hat`.
    pub x_hat: Vec<f64>,
    /// Last iterate `x(K)`.
    pub x_last: Vec<f64>,
    /// The `K` samples consumed, in order.
    pub batch: Vec<Sample>,
}

/// Runs `K` projected SGD steps from `x0`, drawing sample `l` via `draw(l)`.
pub fn run_sgd(
    model: &dyn LossModel,
    draw: &mut dyn FnMut(u64) -> Sample,
    x0: &[f64],
    k: u64,
    schedule: StepSchedule,
    averaging: AveragingScheme,
    set: &FeasibleSet,
) -> Result<SgdOutput> {
    if k == 0 {
        return Err(Error::Precondition("K must be >= 1".into()));
    }
    let d = model.dim();
    if x0.len() != d || set.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if !set.contains(x0) {
        return Err(Error::Precondition("x0 is not feasible; project it first".into()));
    }
    schedule.validate()?;
    averaging.validate()?;

    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut batch = Vec::with_capacity(k as usize);
    let mut acc = vec![0.0; d];
    let mut wsum = 0.0;
    if averaging == AveragingScheme::InverseStep {
        acc.copy_from_slice(&x);
        wsum = 1.0;
    }
    for l in 0..k {
        let z = draw(l);
        model.grad_into(&x, &z, &mut g);
        let mu = schedule.step(l + 1);
        for i in 0..d {
            x[i] -= mu * g[i];
        }
        set.project_in_place(&mut x);
        batch.push(z);
        match averaging {
            AveragingScheme::LastIterate => {}
            AveragingScheme::Uniform => {
                for i in 0..d {
                    acc[i] += x[i];
                }
                wsum += 1.0;
            }
            AveragingScheme::Gamma { factor } => {
                for i in 0..d {
                    acc[i] = factor * acc[i] + x[i];
                }
                wsum = factor * wsum + 1.0;
            }
            AveragingScheme::InverseStep => {
                let w = 1.0 / mu;
                for i in 0..d {
                    acc[i] += w * x[i];
                }
                wsum += w;
            }
        }
    }
    let x_hat = match averaging {
        AveragingScheme::LastIterate => x.clone(),
        _ => {
            let mut out: Vec<f64> = acc.iter().map(|v| v / wsum).collect();
            // a convex combination of feasible points is feasible; clean up rounding
            set.project_in_place(&mut out);
            out
        }
    };
    Ok(SgdOutput { x_hat, x_last: x, batch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::objective::{DiagonalQuadratic, PenalizedQuadratic};
    use crate::rng::{rng_for, Stream};
    use rand::Rng;

    fn noiseless(_: u64) -> Sample {
        vec![0.0]
    }

    #[test]
    fn one_exact_step() {
        let model = DiagonalQuadratic { h: vec![1.0] };
        let set = FeasibleSet::cube(1, -5.0, 5.0).unwrap();
        let out = run_sgd(
            &model,
            &mut noiseless,
            &[1.0],
            1,
            StepSchedule::Constant { mu: 0.5 },
            AveragingScheme::LastIterate,
            &set,
        )
        .unwrap();
        assert_eq!(out.x_hat, vec![0.5]);
        assert_eq!(out.batch.len(), 1);
    }

    #[test]
    fn zero_step_keeps_x0() {
        let model = PenalizedQuadratic { d: 2, lambda: 0.3 };
        let set = FeasibleSet::cube(2, -1.0, 1.0).unwrap();
        let mut draw = |_| vec![0.4, -0.2, 1.0];
        let out = run_sgd(
            &model,
            &mut draw,
            &[0.3, -0.7],
            1,
            StepSchedule::Constant { mu: 0.0 },
            AveragingScheme::LastIterate,
            &set,
        )
        .unwrap();
        assert_eq!(out.x_hat, vec![0.3, -0.7]);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let model = DiagonalQuadratic { h: vec![1.0] };
        let set = FeasibleSet::cube(1, -1.0, 1.0).unwrap();
        let r = run_sgd(
            &model,
            &mut noiseless,
            &[2.0],
            1,
            StepSchedule::Constant { mu: 0.0 },
            AveragingScheme::LastIterate,
            &set,
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn invalid_schedule_is_rejected() {
        let model = DiagonalQuadratic { h: vec![1.0] };
        let set = FeasibleSet::cube(1, -1.0, 1.0).unwrap();
        let r = run_sgd(
            &model,
            &mut noiseless,
            &[0.0],
            3,
            StepSchedule::Power { c: 1.0, alpha: 1.5 },
            AveragingScheme::Uniform,
            &set,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn weight_examples() {
        let c = StepSchedule::Constant { mu: 0.1 };
        assert_eq!(
            averaging_weights(AveragingScheme::Uniform, c, 4).unwrap(),
            vec![0.0, 0.25, 0.25, 0.25, 0.25]
        );
        let g = averaging_weights(AveragingScheme::Gamma { factor: 0.9 }, c, 2).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 0.473_684_210_5).abs() < 1e-9);
        assert!((g[2] - 0.526_315_789_5).abs() < 1e-9);
        assert_eq!(
            averaging_weights(AveragingScheme::LastIterate, c, 3).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        assert!(matches!(
            AveragingScheme::gamma(1.0, 0.0, 1.5),
            Err(Error::InadmissibleStep(_))
        ));
    }

    #[test]
    fn inverse_step_weights_follow_unit_convention() {
        // mu(l) = 1/l, mu(0) = 1: raw weights 1, 1, 2, 3
        let w = averaging_weights(
            AveragingScheme::InverseStep,
            StepSchedule::InverseStrong { m: 1.0 },
            3,
        )
        .unwrap();
        let expect = [1.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0, 3.0 / 7.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Streaming averages must equal the explicit weighted sum of iterates.
    #[test]
    fn streaming_average_matches_weights() {
        let model = DiagonalQuadratic { h: vec![1.0, 0.5] };
        let set = FeasibleSet::origin_ball(2, 3.0).unwrap();
        let sched = StepSchedule::Power { c: 0.5, alpha: 0.75 };
        for scheme in [
            AveragingScheme::LastIterate,
            AveragingScheme::Uniform,
            AveragingScheme::Gamma { factor: 0.93 },
            AveragingScheme::InverseStep,
        ] {
            let k = 12;
            let mut draw = |l: u64| {
                let mut r = rng_for(3, Stream::Train, 1, l);
                vec![r.random::<f64>() - 0.5, r.random::<f64>() - 0.5]
            };
            let out = run_sgd(&model, &mut draw, &[2.0, -1.0], k, sched, scheme, &set).unwrap();
            // replay the iterates explicitly
            let mut xs = vec![vec![2.0, -1.0]];
            for l in 0..k {
                let z = &out.batch[l as usize];
                let x = xs.last().unwrap();
                let g = model.grad(x, z);
                let mu = sched.step(l + 1);
                let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - mu * b).collect();
                xs.push(set.project(&y).unwrap());
            }
            let w = averaging_weights(scheme, sched, k).unwrap();
            for i in 0..2 {
                let v: f64 = w.iter().zip(&xs).map(|(wl, x)| wl * x[i]).sum();
                assert!((v - out.x_hat[i]).abs() < 1e-12, "{scheme:?}");
            }
            assert_eq!(out.x_last, *xs.last().unwrap());
        }
    }

    #[test]
    fn iterates_stay_feasible() {
        let model = PenalizedQuadratic { d: 2, lambda: 0.0 };
        let set = FeasibleSet::cube(2, -0.5, 0.5).unwrap();
        let mut draw = |l: u64| {
            let mut r = rng_for(1, Stream::Train, 0, l);
            vec![r.random::<f64>() * 4.0, r.random::<f64>() * 4.0, 50.0]
        };
        let out = run_sgd(
            &model,
            &mut draw,
            &[0.0, 0.0],
            50,
            StepSchedule::Constant { mu: 0.3 },
            AveragingScheme::Uniform,
            &set,
        )
        .unwrap();
        assert!(set.contains(&out.x_last));
        assert!(set.contains(&out.x_hat));
    }

    #[test]
    fn noiseless_gap_decreases_monotonically() {
        let model = DiagonalQuadratic { h: vec![1.0, 1.8] };
        let set = FeasibleSet::origin_ball(2, 10.0).unwrap();
        let mu = 0.9 * 2.0 / 1.8;
        let mut x = vec![3.0, -2.0];
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            let out = run_sgd(
                &model,
                &mut |_| vec![0.0, 0.0],
                &x,
                1,
                StepSchedule::Constant { mu },
                AveragingScheme::LastIterate,
                &set,
            )
            .unwrap();
            x = out.x_hat;
            let gap = 0.5 * (1.0 * x[0] * x[0] + 1.8 * x[1] * x[1]);
            assert!(gap <= last);
            last = gap;
        }
        assert!(dot(&x, &x) < 1e-3);
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let model = PenalizedQuadratic { d: 3, lambda: 0.1 };
        let set = FeasibleSet::origin_ball(3, 5.0).unwrap();
        let run = || {
            let mut draw = |l: u64| {
                let mut r = rng_for(42, Stream::Train, 2, l);
                (0..4).map(|_| r.random::<f64>()).collect()
            };
            run_sgd(
                &model,
                &mut draw,
                &[0.0; 3],
                100,
                StepSchedule::Constant { mu: 0.05 },
                AveragingScheme::Uniform,
                &set,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
