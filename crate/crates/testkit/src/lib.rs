//! Slow, direct reference computations for checking the fast paths.
//!
//! Nothing here uses the library under test. Densities are integrated by
//! double-exponential quadrature and linear algebra goes through explicit
//! inverses and determinants.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use std::f64::consts::PI;

/// `∫_a^b f` by tanh-sinh quadrature.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, 1e-13).integral
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Asymmetric Laplace density written out from the check function.
pub fn al_density(p: f64, sigma: f64, eps: f64) -> f64 {
    let rho = if eps >= 0.0 { p * eps } else { (p - 1.0) * eps };
    p * (1.0 - p) / sigma * (-rho / sigma).exp()
}

/// The asymmetric Laplace density recovered by integrating the exponential
/// mixing weight out of the normal location-scale mixture.
pub fn al_density_by_mixture(p: f64, sigma: f64, eps: f64) -> f64 {
    let pq = p * (1.0 - p);
    // w = u² removes the 1/√w behaviour at the origin; u = s/(1-s) maps the
    // half line onto (0, 1).
    let integrand = |s: f64| {
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let u = s / (1.0 - s);
        let w = u * u;
        let du = 1.0 / (1.0 - s).powi(2);
        let mixed = normal_pdf(eps, (1.0 - 2.0 * p) / pq * w, 2.0 * sigma * w / pq);
        mixed * (-w / sigma).exp() / sigma * 2.0 * u * du
    };
    integrate(integrand, 0.0, 1.0)
}

/// Design `[1, x, (x - γ)_+]` of a linear spline with at most one knot.
pub fn linear_spline_design(x: &[f64], knot: Option<f64>) -> DMatrix<f64> {
    let q = 2 + usize::from(knot.is_some());
    DMatrix::from_fn(x.len(), q, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        _ => (x[i] - knot.unwrap()).max(0.0),
    })
}

/// `S` through explicit inverses.
pub fn naive_s(design: &DMatrix<f64>, y: &[f64], w: &[f64], c: f64, p: f64) -> f64 {
    let shift = (1.0 - 2.0 * p) / (p * (1.0 - p));
    let yw = DVector::from_iterator(y.len(), y.iter().zip(w).map(|(y, w)| y - shift * w));
    let winv = DMatrix::from_diagonal(&DVector::from_iterator(w.len(), w.iter().map(|w| 1.0 / w)));
    let g = design.transpose() * &winv * design;
    let ginv = g.try_inverse().expect("invertible gram matrix");
    let b = design.transpose() * &winv * &yw;
    let a = (yw.transpose() * &winv * &yw)[(0, 0)];
    a - c / (c + 1.0) * (b.transpose() * ginv * b)[(0, 0)]
}

/// Inputs of the brute-force marginal posterior.
pub struct TinyState<'a> {
    pub design: &'a DMatrix<f64>,
    pub active_knots: usize,
    pub w: &'a [f64],
    pub c: f64,
}

/// Log of the joint density of `(y, z, γ, w, c)` with `β` and `σ`
/// integrated out, up to a constant that depends on `n` and `p` only.
///
/// For fixed `σ`, `y` given `w` is Gaussian with mean `shift·w` and
/// covariance `v (W + c X G⁻¹ X')`, `v = 2σ/(p(1-p))`, `G = X'W⁻¹X`. The `σ`
/// integral is done numerically in `log σ` with the `1/σ` prior and the
/// exponential prior on every `w_i`.
pub fn brute_force_log_posterior(y: &[f64], p: f64, lambda: f64, state: &TinyState<'_>) -> f64 {
    let n = y.len();
    let x = state.design;
    let pq = p * (1.0 - p);
    let shift = (1.0 - 2.0 * p) / pq;
    let wmat = DMatrix::from_diagonal(&DVector::from_column_slice(state.w));
    let winv = wmat.clone().try_inverse().unwrap();
    let ginv = (x.transpose() * &winv * x).try_inverse().unwrap();
    let m = &wmat + x * ginv * x.transpose() * state.c;
    let minv = m.clone().try_inverse().unwrap();
    let log_det_m = m.determinant().ln();
    let r = DVector::from_iterator(n, y.iter().zip(state.w).map(|(y, w)| y - shift * w));
    let quad = (r.transpose() * minv * &r)[(0, 0)];
    let sum_w: f64 = state.w.iter().sum();
    let nf = n as f64;

    let log_integrand = |t: f64| {
        let sigma = t.exp();
        let v = 2.0 * sigma / pq;
        let log_lik = -0.5 * nf * (2.0 * PI * v).ln() - 0.5 * log_det_m - 0.5 * quad / v;
        let log_w_prior = -nf * t - sum_w / sigma;
        // 1/σ prior and dσ = σ dt cancel.
        log_lik + log_w_prior
    };
    let a = pq / 4.0 * quad + sum_w;
    let mode = (a / (1.5 * nf)).ln();
    let peak = log_integrand(mode);
    let sigma_part = peak + integrate(|t| (log_integrand(t) - peak).exp(), mode - 8.0, mode + 25.0).ln();

    let k = state.active_knots;
    let log_z = k as f64 * lambda.ln() - (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let log_c = -2.0 * state.c.ln() - 2.0 * nf / state.c;
    sigma_part + log_z + log_c
}

/// Candidate-knot intervals of the tiny instances.
pub const TINY_INTERVALS: [(f64, f64); 2] = [(0.0, 0.5), (0.5, 1.0)];

/// One state of a tiny instance: at most one active knot `(interval, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyDraw {
    pub knot: Option<(usize, f64)>,
    pub w: Vec<f64>,
    pub c: f64,
}

/// Small regression problem on `[0, 1]` with several states to compare.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: f64,
    pub lambda: f64,
    pub draws: Vec<TinyDraw>,
}

/// `count` instances with `n` cycling through 4, 5, 6. Covariates are
/// stratified with fixed end points, so a knot drawn from the middle half of
/// either interval always has observations on both sides and the design
/// keeps full rank.
pub fn tiny_instances(seed: u64, count: usize, draws_per_instance: usize) -> Vec<TinyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = 4 + i % 3;
            let mut x: Vec<f64> = (0..n).map(|k| (k as f64 + rng.random_range(0.1..0.9)) / n as f64).collect();
            x[0] = 0.0;
            x[n - 1] = 1.0;
            let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = rng.random_range(0.1..0.9);
            let lambda = rng.random_range(0.5..4.0);
            let draws = (0..draws_per_instance)
                .map(|d| {
                    let knot = match d % 3 {
                        0 => None,
                        k => {
                            let (lo, hi) = TINY_INTERVALS[k - 1];
                            let width = hi - lo;
                            Some((k - 1, lo + width * rng.random_range(0.25..0.75)))
                        }
                    };
                    let w = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
                    let c = rng.random_range(0.2..50.0);
                    TinyDraw { knot, w, c }
                })
                .collect();
            TinyInstance { x, y, p, lambda, draws }
        })
        .collect()
}

/// Pearson χ² goodness-of-fit p-value for counts against cell probabilities.
pub fn chi_square_p_value(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&o, &pr)| {
            let e = pr * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (counts.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_of_gaussian() {
        let v = integrate(|x| normal_pdf(x, 0.3, 2.0), -30.0, 30.0);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_matches_density_at_one_point() {
        let a = al_density_by_mixture(0.3, 0.7, -0.4);
        assert!((a - al_density(0.3, 0.7, -0.4)).abs() < 1e-9);
    }

    #[test]
    fn uniform_counts_have_large_p_value() {
        assert!(chi_square_p_value(&[100, 100, 100, 100], &[0.25; 4]) > 0.99);
        assert!(chi_square_p_value(&[400, 0, 0, 0], &[0.25; 4]) < 1e-10);
    }

    #[test]
    fn s_without_shrinkage_is_weighted_total_sum_of_squares() {
        // c → 0 leaves S = Y_W' W⁻¹ Y_W.
        let x = linear_spline_design(&[0.0, 0.5, 1.0], None);
        let s = naive_s(&x, &[1.0, 2.0, 4.0], &[1.0, 1.0, 1.0], 1e-300, 0.5);
        assert!((s - 21.0).abs() < 1e-12);
    }
}
