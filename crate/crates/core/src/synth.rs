//! Synthetic task sequences with known structure.
//!
//! Regression: `z = (w, y)`, `w ~ N(0, s2 I)`, `y = w^T r_n / s2 + xi`,
//! `xi ~ N(0, noise_var)`, so `E[w y] = r_n` and `Var y = |r_n|^2 / s2 + noise_var`.
//! Under the penalized quadratic loss `x*_n = r_n / (s2 + lambda)`. The walk
//! `r_n` moves by `rho (s2 + lambda)` along a seeded unit direction and is
//! centered so that `x*_1` and `x*_N` are symmetric about the origin.
//!
//! Classification: labels `y = +-1` with probability 1/2 each and
//! `w | y ~ N(y mu_n, s2 I)`, where `mu_n` walks along a great circle of the
//! unit sphere in a seeded 2-plane.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::gap_bounds::FunctionParams;
use crate::linalg::{dist, dot, norm, SymMatrix};
use crate::objective::{LossModel, PenalizedQuadratic, Sample, SmoothedHinge, TaskSequence};
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

fn unit_vector(d: usize, seed: u64, tag: u64) -> Vec<f64> {
    let mut g = rng_for(seed, Stream::Setup, tag, 0);
    loop {
        let v: Vec<f64> = (0..d).map(|_| g.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionSequence {
    pub d: usize,
    pub sigma_w2: f64,
    pub lambda: f64,
    pub rho: f64,
    pub horizon: usize,
    pub noise_var: f64,
    pub direction: Vec<f64>,
    /// `r_1..r_N`.
    pub r: Vec<Vec<f64>>,
    model: PenalizedQuadratic,
}

pub fn make_regression(d: usize, sigma_w2: f64, lambda: f64, rho: f64, horizon: usize, seed: u64) -> Result<RegressionSequence> {
    make_regression_with_noise(d, sigma_w2, lambda, rho, horizon, 1.0, seed)
}

pub fn make_regression_with_noise(
    d: usize,
    sigma_w2: f64,
    lambda: f64,
    rho: f64,
    horizon: usize,
    noise_var: f64,
    seed: u64,
) -> Result<RegressionSequence> {
    if d == 0 || horizon == 0 {
        return Err(Error::param("need d >= 1 and N >= 1"));
    }
    if !(sigma_w2 > 0.0) || !(lambda >= 0.0) || !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::param(format!(
            "need s2 > 0, lambda >= 0, rho >= 0; got {sigma_w2}, {lambda}, {rho}"
        )));
    }
    if !(noise_var > 0.0) {
        return Err(Error::Precondition(format!(
            "joint covariance of (w, y) is not positive definite: response noise variance {noise_var}"
        )));
    }
    let u = unit_vector(d, seed, 0);
    let step = rho * (sigma_w2 + lambda);
    let start = -0.5 * (horizon - 1) as f64 * step;
    let r = (0..horizon)
        .map(|i| {
            let c = start + i as f64 * step;
            u.iter().map(|v| c * v).collect()
        })
        .collect();
    Ok(RegressionSequence {
        d,
        sigma_w2,
        lambda,
        rho,
        horizon,
        noise_var,
        direction: u,
        r,
        model: PenalizedQuadratic { d, lambda },
    })
}

impl RegressionSequence {
    pub fn curvature(&self) -> f64 {
        self.sigma_w2 + self.lambda
    }

    pub fn x_star(&self, n: usize) -> Vec<f64> {
        let c = self.curvature();
        self.r[n - 1].iter().map(|v| v / c).collect()
    }

    pub fn sigma_y2(&self, n: usize) -> f64 {
        dot(&self.r[n - 1], &self.r[n - 1]) / self.sigma_w2 + self.noise_var
    }

    /// Joint second-moment matrix of `(w, y)` at task `n`.
    pub fn covariance(&self, n: usize) -> SymMatrix {
        let d = self.d;
        let mut c = SymMatrix::zeros(d + 1);
        for i in 0..d {
            c.set(i, i, self.sigma_w2);
            c.set(i, d, self.r[n - 1][i]);
        }
        c.set(d, d, self.sigma_y2(n));
        c
    }

    /// `E |grad l(x*_n, z)|^2 = d s2 noise_var + (d + 1) lambda^2 |x*_n|^2`.
    pub fn grad_second_moment_at_opt(&self, n: usize) -> f64 {
        let xs = self.x_star(n);
        let d = self.d as f64;
        d * self.sigma_w2 * self.noise_var + (d + 1.0) * self.lambda.powi(2) * dot(&xs, &xs)
    }

    /// `lambda_max E[(w w^T + lambda I)^2] = (d + 2) s2^2 + 2 lambda s2 + lambda^2`.
    pub fn hessian_second_moment(&self) -> f64 {
        let s = self.sigma_w2;
        (self.d as f64 + 2.0) * s * s + 2.0 * self.lambda * s + self.lambda * self.lambda
    }

    /// Exact `psi` with `E|grad l(x, z)|^2 <= A + B |x - x*|^2`:
    /// `m = M = s2 + lambda`, `A = 2 max_n E|grad l(x*_n)|^2`, `B = 2 lambda_max E[H^2]`.
    pub fn analytic_params(&self, diam_sq: f64) -> FunctionParams {
        let a = (1..=self.horizon).map(|n| self.grad_second_moment_at_opt(n)).fold(0.0, f64::max);
        FunctionParams {
            m: self.curvature(),
            big_m: self.curvature(),
            a: 2.0 * a,
            b: 2.0 * self.hessian_second_moment(),
            c_g: 0.0,
            diam_sq,
        }
    }

    pub fn max_minimizer_norm(&self) -> f64 {
        (1..=self.horizon).map(|n| norm(&self.x_star(n))).fold(0.0, f64::max)
    }
}

impl TaskSequence for RegressionSequence {
    fn model(&self) -> &dyn LossModel {
        &self.model
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample(&self, stream: Stream, n: usize, k: u64, seed: u64) -> Sample {
        let mut g = rng_for(seed, stream, n as u64, k);
        let mut z: Vec<f64> = (0..self.d)
            .map(|_| self.sigma_w2.sqrt() * g.sample::<f64, _>(StandardNormal))
            .collect();
        let xi: f64 = g.sample(StandardNormal);
        let y = dot(&z, &self.r[n - 1]) / self.sigma_w2 + self.noise_var.sqrt() * xi;
        z.push(y);
        z
    }

    fn minimizer(&self, n: usize) -> Option<Vec<f64>> {
        Some(self.x_star(n))
    }

    fn exact_gap(&self, n: usize, x: &[f64]) -> Option<f64> {
        let e = dist(x, &self.x_star(n));
        Some(0.5 * self.curvature() * e * e)
    }

    fn declared_rho(&self) -> Option<f64> {
        Some(self.rho)
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationSequence {
    pub d: usize,
    pub sigma2: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub arc_step: f64,
    /// Orthonormal pair spanning the plane of the means.
    pub plane: (Vec<f64>, Vec<f64>),
    pub theta0: f64,
    model: SmoothedHinge,
}

pub fn make_classification(
    d: usize,
    sigma2: f64,
    lambda: f64,
    horizon: usize,
    arc_step: f64,
    seed: u64,
) -> Result<ClassificationSequence> {
    if d < 2 {
        return Err(Error::param(format!("classification needs d >= 2, got {d}")));
    }
    if horizon == 0 || !(sigma2 > 0.0) || !(lambda >= 0.0) || !arc_step.is_finite() {
        return Err(Error::param("need N >= 1, s2 > 0, lambda >= 0 and a finite arc step"));
    }
    let a = unit_vector(d, seed, 1);
    let mut b = unit_vector(d, seed, 2);
    // Gram-Schmidt; redraw in the unlikely collinear case
    let mut tag = 3;
    loop {
        let p = dot(&a, &b);
        let mut c: Vec<f64> = b.iter().zip(&a).map(|(b, a)| b - p * a).collect();
        let nc = norm(&c);
        if nc > 1e-6 {
            c.iter_mut().for_each(|v| *v /= nc);
            b = c;
            break;
        }
        b = unit_vector(d, seed, tag);
        tag += 1;
    }
    let theta0 = rng_for(seed, Stream::Setup, 99, 0).random::<f64>() * std::f64::consts::TAU;
    Ok(ClassificationSequence {
        d,
        sigma2,
        lambda,
        horizon,
        arc_step,
        plane: (a, b),
        theta0,
        model: SmoothedHinge { d, lambda },
    })
}

impl ClassificationSequence {
    /// Mean of the positive class at task `n`; the negative class mean is its negation.
    pub fn class_mean(&self, n: usize) -> Vec<f64> {
        let t = self.theta0 + (n - 1) as f64 * self.arc_step;
        let (a, b) = &self.plane;
        a.iter().zip(b).map(|(a, b)| t.cos() * a + t.sin() * b).collect()
    }
}

impl TaskSequence for ClassificationSequence {
    fn model(&self) -> &dyn LossModel {
        &self.model
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample(&self, stream: Stream, n: usize, k: u64, seed: u64) -> Sample {
        let mut g = rng_for(seed, stream, n as u64, k);
        let y = if g.random::<bool>() { 1.0 } else { -1.0 };
        let mu = self.class_mean(n);
        let s = self.sigma2.sqrt();
        let mut z: Vec<f64> = mu
            .iter()
            .map(|m| y * m + s * g.sample::<f64, _>(StandardNormal))
            .collect();
        z.push(y);
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FeasibleSet;
    use crate::sgd::{run_sgd, AveragingScheme, StepSchedule};

    #[test]
    fn regression_drift_is_exact() {
        let s = make_regression(5, 0.9, 0.1, 1.0, 20, 3).unwrap();
        for n in 2..=20 {
            assert!((dist(&s.r[n - 1], &s.r[n - 2]) - 1.0).abs() < 1e-12);
            assert!((dist(&s.x_star(n), &s.x_star(n - 1)) - 1.0).abs() < 1e-10);
        }
        assert!((norm(&s.x_star(1)) - 9.5).abs() < 1e-10);
        let still = make_regression(3, 0.9, 0.1, 0.0, 5, 3).unwrap();
        for n in 2..=5 {
            assert_eq!(still.x_star(n), still.x_star(1));
        }
        assert_eq!(s.exact_gap(7, &s.x_star(7)), Some(0.0));
    }

    #[test]
    fn regression_covariance_is_positive_definite() {
        let s = make_regression(4, 0.5, 0.2, 2.0, 10, 1).unwrap();
        for n in 1..=10 {
            assert!(s.covariance(n).min_eig() > 0.0);
            assert!(s.sigma_y2(n) >= dot(&s.r[n - 1], &s.r[n - 1]) / s.sigma_w2 + 1.0 - 1e-12);
        }
        assert!(make_regression_with_noise(2, 1.0, 0.1, 1.0, 3, 0.0, 1).is_err());
        assert!(make_regression(0, 1.0, 0.1, 1.0, 3, 1).is_err());
    }

    #[test]
    fn empirical_covariance_matches_declared() {
        let s = make_regression(3, 0.9, 0.1, 1.0, 4, 11).unwrap();
        let n = 3;
        let trials = 100_000u64;
        let dim = s.d + 1;
        let mut sum = vec![0.0; dim * dim];
        let mut sq = vec![0.0; dim * dim];
        for k in 0..trials {
            let z = s.sample(Stream::Train, n, k, 5);
            for i in 0..dim {
                for j in 0..dim {
                    let p = z[i] * z[j];
                    sum[i * dim + j] += p;
                    sq[i * dim + j] += p * p;
                }
            }
        }
        let c = s.covariance(n);
        let t = trials as f64;
        for i in 0..dim {
            for j in 0..dim {
                let mean = sum[i * dim + j] / t;
                let var = sq[i * dim + j] / t - mean * mean;
                let se = (var / t).sqrt();
                assert!((mean - c.get(i, j)).abs() <= 3.0 * se, "entry ({i},{j}): {mean} vs {}", c.get(i, j));
            }
        }
    }

    #[test]
    fn analytic_moments_match_monte_carlo() {
        let s = make_regression(3, 0.9, 0.1, 1.0, 4, 2).unwrap();
        let n = 4;
        let xs = s.x_star(n);
        let model = s.model();
        let trials = 200_000u64;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for k in 0..trials {
            let z = s.sample(Stream::Aux(7), n, k, 1);
            let g = model.grad(&xs, &z);
            let v = dot(&g, &g);
            acc += v;
            acc2 += v * v;
        }
        let t = trials as f64;
        let mean = acc / t;
        let se = ((acc2 / t - mean * mean) / t).sqrt();
        assert!((mean - s.grad_second_moment_at_opt(n)).abs() < 4.0 * se);

        // E[(w w^T + lambda I)^2] e for a fixed unit e
        let e = [1.0, 0.0, 0.0];
        let mut acc = 0.0;
        for k in 0..trials {
            let z = s.sample(Stream::Aux(8), n, k, 1);
            let h = model.hessian(&xs, &z).unwrap();
            let he: Vec<f64> = (0..3).map(|i| (0..3).map(|j| h.get(i, j) * e[j]).sum()).collect();
            acc += dot(&he, &he);
        }
        assert!((acc / t - s.hessian_second_moment()).abs() / s.hessian_second_moment() < 0.02);
    }

    #[test]
    fn long_sgd_run_finds_the_minimizer() {
        let s = make_regression(3, 0.9, 0.1, 1.0, 3, 4).unwrap();
        let set = FeasibleSet::origin_ball(3, 12.0).unwrap();
        let n = 2;
        let mut draw = |k: u64| s.sample(Stream::Train, n, k, 9);
        let out = run_sgd(
            s.model(),
            &mut draw,
            &[0.0; 3],
            200_000,
            StepSchedule::Power { c: 1.0, alpha: 1.0 },
            AveragingScheme::LastIterate,
            &set,
        )
        .unwrap();
        assert!(s.exact_gap(n, &out.x_hat).unwrap() < 1e-3);
    }

    #[test]
    fn classification_chords() {
        use std::f64::consts::PI;
        for (arc, chord) in [(0.0, 0.0), (PI, 2.0), (PI / 3.0, 1.0)] {
            let s = make_classification(4, 0.5, 0.01, 10, arc, 2).unwrap();
            for n in 1..=10 {
                assert!((norm(&s.class_mean(n)) - 1.0).abs() < 1e-12);
            }
            for n in 2..=10 {
                assert!((dist(&s.class_mean(n), &s.class_mean(n - 1)) - chord).abs() < 1e-12);
            }
        }
        assert!(make_classification(1, 0.5, 0.01, 10, 0.1, 2).is_err());
    }

    #[test]
    fn classification_labels_balanced() {
        let s = make_classification(3, 0.5, 0.01, 2, 0.1, 8).unwrap();
        let pos = (0..10_000u64).filter(|&k| s.sample(Stream::Train, 1, k, 0)[3] > 0.0).count();
        assert!((pos as f64 - 5000.0).abs() < 3.0 * 50.0);
    }
}
