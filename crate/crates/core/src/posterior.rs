//! Check loss, asymmetric Laplace density and the marginal posterior of the
//! latent state `(z, γ, W, c)` with the regression coefficients and the
//! scale integrated out.
//!
//! With `Y_W = Y - (1-2p)/(p(1-p)) W 1`, `G = X' W⁻¹ X`, `b = X' W⁻¹ Y_W` and
//! `S = Y_W' W⁻¹ Y_W - c/(c+1) b' G⁻¹ b`, the unnormalized log-posterior is
//!
//! ```text
//! log π(c) + log π(z) - ½ Σ log w_i - (q/2) log(c+1) - (3n/2) log[p(1-p)/4 · S + Σ w_i]
//! ```
//!
//! where `q` is the number of design columns (`|z| + P + 1` for one
//! covariate), `log π(c) = -2 log c - 2n/c` and
//! `log π(z) = Σ_j |z_j| log λ - log |z_j|!` (truncated at `L`). Everything is
//! evaluated in log space: the bracket is raised to a power in the hundreds.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::basis::{self, DesignMatrix, SplineSpec};
use crate::error::{invalid, Error, Result};

/// `ρ_p(ε)`: `pε` for `ε ≥ 0`, `(p-1)ε` otherwise.
pub fn check_loss(p: f64, eps: f64) -> f64 {
    if eps >= 0.0 {
        p * eps
    } else {
        (p - 1.0) * eps
    }
}

/// Log density of the asymmetric Laplace distribution with `p`-th quantile 0.
pub fn al_log_density(p: f64, sigma: f64, eps: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return invalid(format!("scale must be positive, got {sigma}"));
    }
    check_level(p)?;
    Ok((p * (1.0 - p) / sigma).ln() - check_loss(p, eps) / sigma)
}

/// Mean shift of the normal scale mixture per unit of `w`.
pub fn mixture_shift(p: f64) -> f64 {
    (1.0 - 2.0 * p) / (p * (1.0 - p))
}

/// `Y_W = y - w (1-2p)/(p(1-p))`, elementwise.
pub fn shifted_response(y: &[f64], w: &[f64], p: f64) -> Vec<f64> {
    let shift = mixture_shift(p);
    y.iter().zip(w).map(|(yi, wi)| yi - wi * shift).collect()
}

pub(crate) fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        invalid(format!("quantile level must lie in (0, 1), got {p}"))
    }
}

/// Hyperparameters of the knot-count and `c` priors.
///
/// `c ~ IG(1, 2n)` is data dependent and therefore not stored here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Mean of the truncated Poisson prior on the knot count.
    pub lambda: f64,
    /// Truncation point `L` (per covariate).
    pub max_knots: usize,
}

impl PriorConfig {
    pub fn new(lambda: f64, max_knots: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("lambda must be positive, got {lambda}"));
        }
        Ok(Self { lambda, max_knots })
    }

    /// `log π_z` for one covariate, `-∞` above the truncation point.
    pub fn log_prior_count(&self, active: usize) -> f64 {
        if active > self.max_knots {
            return f64::NEG_INFINITY;
        }
        active as f64 * self.lambda.ln() - ln_factorial(active)
    }
}

/// Unnormalized `log π(c)` for `c ~ IG(1, 2n)`.
pub fn log_prior_c(c: f64, n: usize) -> f64 {
    if !(c > 0.0) {
        return f64::NEG_INFINITY;
    }
    -2.0 * c.ln() - 2.0 * n as f64 / c
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Quantile level, per-covariate splines and priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModelSpec {
    p: f64,
    splines: Vec<SplineSpec>,
    priors: PriorConfig,
}

impl QuantileModelSpec {
    pub fn new(p: f64, spline: SplineSpec, priors: PriorConfig) -> Result<Self> {
        Self::additive(p, vec![spline], priors)
    }

    pub fn additive(p: f64, splines: Vec<SplineSpec>, priors: PriorConfig) -> Result<Self> {
        check_level(p)?;
        if splines.is_empty() {
            return invalid("model needs at least one covariate spline");
        }
        for (j, s) in splines.iter().enumerate() {
            if priors.max_knots > s.max_knots() {
                return invalid(format!(
                    "L = {} exceeds K_max = {} for covariate {j}",
                    priors.max_knots,
                    s.max_knots()
                ));
            }
        }
        Ok(Self { p, splines, priors })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn splines(&self) -> &[SplineSpec] {
        &self.splines
    }

    pub fn priors(&self) -> &PriorConfig {
        &self.priors
    }

    pub fn covariates(&self) -> usize {
        self.splines.len()
    }

    /// Length of the flattened `z` / `γ` vectors.
    pub fn total_knots(&self) -> usize {
        self.splines.iter().map(SplineSpec::max_knots).sum()
    }

    /// Start of each covariate's block in the flattened knot vectors.
    pub fn knot_offsets(&self) -> Vec<usize> {
        self.splines
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.max_knots();
                Some(start)
            })
            .collect()
    }

    /// Maps a flattened knot index to `(covariate, local index)`.
    pub fn locate_knot(&self, flat: usize) -> (usize, usize) {
        let mut k = flat;
        for (j, s) in self.splines.iter().enumerate() {
            if k < s.max_knots() {
                return (j, k);
            }
            k -= s.max_knots();
        }
        panic!("knot index {flat} out of range");
    }

    pub fn with_level(&self, p: f64) -> Result<Self> {
        check_level(p)?;
        Ok(Self { p, ..self.clone() })
    }

    /// Log prior of the flattened knot indicators.
    pub fn log_prior_z(&self, z: &[bool]) -> f64 {
        let mut total = 0.0;
        for (s, start) in self.splines.iter().zip(self.knot_offsets()) {
            let active = z[start..start + s.max_knots()].iter().filter(|&&b| b).count();
            total += self.priors.log_prior_count(active);
        }
        total
    }

    /// Whether every `γ_k` lies in its interval.
    pub fn gamma_in_support(&self, gamma: &[f64]) -> bool {
        self.splines
            .iter()
            .zip(self.knot_offsets())
            .all(|(s, start)| (0..s.max_knots()).all(|k| s.interval_contains(k, gamma[start + k])))
    }

    /// Design for the flattened `(z, γ)` at covariate columns `x`.
    pub fn design(&self, x: &[&[f64]], z: &[bool], gamma: &[f64]) -> Result<DesignMatrix> {
        if x.len() != self.splines.len() {
            return invalid(format!(
                "model has {} covariates but {} columns were supplied",
                self.splines.len(),
                x.len()
            ));
        }
        let knots: Vec<(&[bool], &[f64])> = self
            .splines
            .iter()
            .zip(self.knot_offsets())
            .map(|(s, start)| {
                let r = start..start + s.max_knots();
                (&z[r.clone()], &gamma[r])
            })
            .collect();
        basis::design_from_slices(x, &knots, &self.splines)
    }
}

/// Responses and covariate columns, covariates already on the model scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelData {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl ModelData {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return invalid("at least one covariate column is required");
        }
        if y.is_empty() {
            return invalid("no observations");
        }
        for (j, col) in x.iter().enumerate() {
            if col.len() != y.len() {
                return invalid(format!("covariate {j} has {} rows, response has {}", col.len(), y.len()));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return invalid(format!("covariate {j} row {i} is not finite"));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return invalid(format!("response row {i} is not finite"));
        }
        Ok(Self { x, y })
    }

    pub fn single(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::new(vec![x], y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn columns(&self) -> Vec<&[f64]> {
        self.x.iter().map(|c| &c[..]).collect()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.x[j]
    }
}

/// Sampler state after integrating out `β` and `σ`. `z` and `γ` are the
/// per-covariate knot vectors concatenated in covariate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub z: Vec<bool>,
    pub gamma: Vec<f64>,
    pub w: Vec<f64>,
    pub c: f64,
}

impl LatentState {
    pub fn active_count(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }

    /// Checks lengths and supports; returns a description of the first
    /// violation.
    pub fn validate(&self, spec: &QuantileModelSpec, n: usize) -> Result<()> {
        let k = spec.total_knots();
        if self.z.len() != k || self.gamma.len() != k {
            return invalid(format!("knot vectors must have length {k}"));
        }
        if self.w.len() != n {
            return invalid(format!("w has length {}, expected {n}", self.w.len()));
        }
        if let Some(i) = self.w.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return invalid(format!("w[{i}] = {} is not positive", self.w[i]));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return invalid(format!("c = {} is not positive", self.c));
        }
        if !spec.gamma_in_support(&self.gamma) {
            return invalid("a knot location lies outside its interval");
        }
        Ok(())
    }
}

/// Unnormalized natural-log posterior density.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogPosteriorValue(pub f64);

impl LogPosteriorValue {
    pub const NEG_INFINITY: Self = Self(f64::NEG_INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

/// Weighted sufficient statistics of a design: `G = X'W⁻¹X`, `b = X'W⁻¹Y_W`,
/// `a = Y_W'W⁻¹Y_W`.
#[derive(Debug, Clone)]
pub(crate) struct WeightedStats {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl WeightedStats {
    pub fn new(x: &DMatrix<f64>, y_w: &[f64], w: &[f64]) -> Self {
        let n = x.nrows();
        let inv_sqrt: Vec<f64> = w.iter().map(|wi| wi.sqrt().recip()).collect();
        let mut xs = x.clone();
        for mut col in xs.column_iter_mut() {
            for i in 0..n {
                col[i] *= inv_sqrt[i];
            }
        }
        let ys = DVector::from_iterator(n, y_w.iter().zip(&inv_sqrt).map(|(y, s)| y * s));
        Self { gram: xs.tr_mul(&xs), xty: xs.tr_mul(&ys), yty: ys.norm_squared() }
    }

    /// Replaces row `i`'s contribution `(x_i, y_old, w_old)` by `(x_i, y_new, w_new)`.
    pub fn replace_row(&mut self, row: &[f64], y_old: f64, w_old: f64, y_new: f64, w_new: f64) {
        let q = row.len();
        let d_inv = w_new.recip() - w_old.recip();
        for a in 0..q {
            let ra = row[a] * d_inv;
            if ra != 0.0 {
                for b in 0..q {
                    self.gram[(a, b)] += ra * row[b];
                }
            }
            self.xty[a] += row[a] * (y_new / w_new - y_old / w_old);
        }
        self.yty += y_new * y_new / w_new - y_old * y_old / w_old;
    }

    pub fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        factor_gram(&self.gram)
    }

    /// `b' G⁻¹ b`.
    pub fn projected(&self) -> Result<f64> {
        let chol = self.factor()?;
        let v = chol.l().solve_lower_triangular(&self.xty).ok_or(Error::SingularDesign)?;
        Ok(v.norm_squared())
    }

    /// `G⁻¹ b`.
    pub fn solve(&self) -> Result<DVector<f64>> {
        Ok(self.factor()?.solve(&self.xty))
    }
}

/// Cholesky of a Gram matrix, treating relative pivots below `1e-11` as
/// rank deficiency.
pub(crate) fn factor_gram(gram: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(gram.clone()).ok_or(Error::SingularDesign)?;
    let l = chol.l_dirty();
    for i in 0..gram.nrows() {
        let g = gram[(i, i)];
        if !(g > 0.0) || l[(i, i)] * l[(i, i)] < 1e-11 * g || !l[(i, i)].is_finite() {
            return Err(Error::SingularDesign);
        }
    }
    Ok(chol)
}

/// `S = a - c/(c+1) · b'G⁻¹b`, clamped at zero against round-off.
pub(crate) fn s_from_parts(yty: f64, projected: f64, c: f64) -> f64 {
    (yty - c / (c + 1.0) * projected).max(0.0)
}

/// The quadratic form `S` for an explicit design.
pub fn quad_form_s(y: &[f64], design: &DesignMatrix, w: &[f64], c: f64, p: f64) -> Result<f64> {
    if y.len() != design.nrows() || w.len() != y.len() {
        return invalid("response, weights and design differ in length");
    }
    if !(c > 0.0) {
        return invalid(format!("c must be positive, got {c}"));
    }
    let y_w = shifted_response(y, w, p);
    let stats = WeightedStats::new(&design.values, &y_w, w);
    Ok(s_from_parts(stats.yty, stats.projected()?, c))
}

/// Log-posterior from already computed pieces.
pub(crate) fn assemble_log_posterior(
    spec: &QuantileModelSpec,
    z: &[bool],
    n: usize,
    q: usize,
    c: f64,
    s: f64,
    sum_w: f64,
    sum_log_w: f64,
) -> f64 {
    let lz = spec.log_prior_z(z);
    if !lz.is_finite() {
        return f64::NEG_INFINITY;
    }
    let p = spec.p();
    let nf = n as f64;
    log_prior_c(c, n) + lz
        - 0.5 * sum_log_w
        - 0.5 * q as f64 * (c + 1.0).ln()
        - 1.5 * nf * (p * (1.0 - p) / 4.0 * s + sum_w).ln()
}

/// Unnormalized log marginal posterior of `state`. Returns `-∞` outside the
/// prior support or when the active design is singular.
pub fn log_marginal_posterior(
    state: &LatentState,
    data: &ModelData,
    spec: &QuantileModelSpec,
) -> Result<LogPosteriorValue> {
    let k = spec.total_knots();
    if state.z.len() != k || state.gamma.len() != k || state.w.len() != data.n() {
        return invalid("state dimensions do not match the model");
    }
    if !spec.log_prior_z(&state.z).is_finite() || !spec.gamma_in_support(&state.gamma) {
        return Ok(LogPosteriorValue::NEG_INFINITY);
    }
    if state.w.iter().any(|&w| !(w > 0.0)) || !(state.c > 0.0) {
        return Ok(LogPosteriorValue::NEG_INFINITY);
    }
    let design = spec.design(&data.columns(), &state.z, &state.gamma)?;
    let y_w = shifted_response(data.y(), &state.w, spec.p());
    let stats = WeightedStats::new(&design.values, &y_w, &state.w);
    let projected = match stats.projected() {
        Ok(v) => v,
        Err(Error::SingularDesign) => return Ok(LogPosteriorValue::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let s = s_from_parts(stats.yty, projected, state.c);
    let sum_w: f64 = state.w.iter().sum();
    let sum_log_w: f64 = state.w.iter().map(|w| w.ln()).sum();
    Ok(LogPosteriorValue(assemble_log_posterior(
        spec,
        &state.z,
        data.n(),
        design.ncols(),
        state.c,
        s,
        sum_w,
        sum_log_w,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{intervals_from_bounds, BasisKind, Column};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(0.5, 2.0), 1.0);
        assert_eq!(check_loss(0.25, -2.0), 1.5);
        for p in [0.1, 0.5, 0.9] {
            assert_eq!(check_loss(p, 0.0), 0.0);
        }
    }

    #[test]
    fn al_density_values() {
        assert!(close(al_log_density(0.5, 1.0, 0.0).unwrap(), 0.25f64.ln(), 1e-15));
        assert!(close(al_log_density(0.25, 2.0, 4.0).unwrap(), 0.09375f64.ln() - 0.5, 1e-15));
        assert!(al_log_density(0.5, 0.0, 1.0).is_err());
        assert!(al_log_density(0.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn shifted_response_values() {
        let y = [1.0, -2.0, 3.5];
        let ones = [1.0; 3];
        assert_eq!(shifted_response(&y, &[0.3, 2.0, 7.0], 0.5), y.to_vec());
        let lo = shifted_response(&y, &ones, 0.25);
        let hi = shifted_response(&y, &ones, 0.75);
        for i in 0..3 {
            assert!(close(lo[i], y[i] - 8.0 / 3.0, 1e-14));
            assert!(close(hi[i], y[i] + 8.0 / 3.0, 1e-14));
        }
    }

    fn intercept_design(n: usize) -> DesignMatrix {
        DesignMatrix { values: DMatrix::from_element(n, 1, 1.0), columns: vec![Column::Intercept] }
    }

    #[test]
    fn s_small_c_is_weighted_norm() {
        let y = [0.4, -1.3, 2.2, 0.9];
        let w = [0.5, 1.5, 2.0, 0.7];
        let p = 0.3;
        let y_w = shifted_response(&y, &w, p);
        let expected: f64 = y_w.iter().zip(&w).map(|(a, b)| a * a / b).sum();
        let s = quad_form_s(&y, &intercept_design(4), &w, 1e-12, p).unwrap();
        assert!(close(s, expected, 1e-9));
    }

    #[test]
    fn s_large_c_intercept_is_centered_sum_of_squares() {
        let y = [1.0, 4.0, -2.0, 3.0, 0.5];
        let mean = y.iter().sum::<f64>() / 5.0;
        let css: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let s = quad_form_s(&y, &intercept_design(5), &[1.0; 5], 1e12, 0.5).unwrap();
        assert!(close(s, css, 1e-9));
    }

    #[test]
    fn duplicate_columns_are_singular() {
        let mut values = DMatrix::from_element(4, 2, 1.0);
        values[(0, 1)] = 1.0;
        let d = DesignMatrix { values, columns: vec![Column::Intercept, Column::Intercept] };
        assert!(matches!(quad_form_s(&[1.0, 2.0, 3.0, 4.0], &d, &[1.0; 4], 1.0, 0.5), Err(Error::SingularDesign)));
    }

    #[test]
    fn rank_one_row_replacement_matches_rebuild() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.1, 1.0, 0.4, 1.0, 0.7, 1.0, 0.9]);
        let y = [0.3, 1.1, -0.2, 0.8];
        let mut w = vec![0.6, 1.2, 0.9, 2.0];
        let p = 0.25;
        let mut stats = WeightedStats::new(&x, &shifted_response(&y, &w, p), &w);
        let shift = mixture_shift(p);
        let (old, new) = (w[2], 0.35);
        let row: Vec<f64> = x.row(2).iter().copied().collect();
        stats.replace_row(&row, y[2] - old * shift, old, y[2] - new * shift, new);
        w[2] = new;
        let fresh = WeightedStats::new(&x, &shifted_response(&y, &w, p), &w);
        assert!((stats.gram - fresh.gram).abs().max() < 1e-12);
        assert!((stats.xty - fresh.xty).abs().max() < 1e-12);
        assert!(close(stats.yty, fresh.yty, 1e-12));
    }

    fn toy() -> (ModelData, QuantileModelSpec) {
        let x = vec![0.0, 0.2, 0.45, 0.6, 0.8, 1.0];
        let y = vec![0.1, 0.5, 0.2, 0.9, 0.4, 1.2];
        let spline = SplineSpec::new(
            1,
            intervals_from_bounds(&[0.0, 0.3, 0.7, 1.0]).unwrap(),
            BasisKind::TruncatedPower,
            0.0,
            1.0,
        )
        .unwrap();
        let spec = QuantileModelSpec::new(0.4, spline, PriorConfig::new(3.0, 2).unwrap()).unwrap();
        (ModelData::single(x, y).unwrap(), spec)
    }

    #[test]
    fn knot_count_beyond_truncation_is_impossible() {
        let (data, spec) = toy();
        let state = LatentState { z: vec![true, true, true], gamma: vec![0.1, 0.5, 0.8], w: vec![1.0; 6], c: 6.0 };
        assert_eq!(log_marginal_posterior(&state, &data, &spec).unwrap(), LogPosteriorValue::NEG_INFINITY);
    }

    #[test]
    fn gamma_outside_support_is_impossible() {
        let (data, spec) = toy();
        let state = LatentState { z: vec![true, false, false], gamma: vec![0.5, 0.5, 0.8], w: vec![1.0; 6], c: 6.0 };
        assert!(!log_marginal_posterior(&state, &data, &spec).unwrap().is_finite());
    }

    #[test]
    fn c_ratio_depends_only_on_c_terms() {
        let (data, spec) = toy();
        let mut a = LatentState {
            z: vec![true, false, true],
            gamma: vec![0.1, 0.5, 0.8],
            w: vec![0.5, 1.0, 1.5, 0.7, 2.0, 1.1],
            c: 3.0,
        };
        let mut b = a.clone();
        b.c = 40.0;
        let la = log_marginal_posterior(&a, &data, &spec).unwrap().value();
        let lb = log_marginal_posterior(&b, &data, &spec).unwrap().value();

        let design = spec.design(&data.columns(), &a.z, &a.gamma).unwrap();
        let q = design.ncols() as f64;
        let n = data.n() as f64;
        let sum_w: f64 = a.w.iter().sum();
        let k = spec.p() * (1.0 - spec.p()) / 4.0;
        let term = |c: f64| {
            let s = quad_form_s(data.y(), &design, &a.w, c, spec.p()).unwrap();
            log_prior_c(c, data.n()) - 0.5 * q * (c + 1.0).ln() - 1.5 * n * (k * s + sum_w).ln()
        };
        assert!(close(lb - la, term(40.0) - term(3.0), 1e-10));

        // Relabelling the (inactive) middle knot changes nothing.
        a.gamma[1] = 0.35;
        b.gamma[1] = 0.69;
        assert!(close(log_marginal_posterior(&a, &data, &spec).unwrap().value(), la, 1e-12));
        assert!(close(log_marginal_posterior(&b, &data, &spec).unwrap().value(), lb, 1e-12));
    }

    #[test]
    fn level_outside_unit_interval_is_rejected() {
        let (_, spec) = toy();
        assert!(spec.with_level(0.0).is_err());
        assert!(spec.with_level(1.0).is_err());
        assert!(PriorConfig::new(0.0, 2).is_err());
    }

    #[test]
    fn truncation_above_interval_count_is_rejected() {
        let spline =
            SplineSpec::new(1, intervals_from_bounds(&[0.0, 0.5, 1.0]).unwrap(), BasisKind::BSpline, 0.0, 1.0).unwrap();
        assert!(QuantileModelSpec::new(0.5, spline, PriorConfig::new(3.0, 3).unwrap()).is_err());
    }
}
