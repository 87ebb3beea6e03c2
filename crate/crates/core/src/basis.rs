//! Knot-interval partitions and spline design matrices.
//!
//! Two bases are available for the same function space (piecewise
//! polynomials of degree `P` with knots at the active `γ_k`):
//!
//! * [`BasisKind::TruncatedPower`]: columns `1, x, ..., x^P` followed by
//!   `(x - γ_k)_+^P` for every active knot, in interval order.
//! * [`BasisKind::BSpline`]: the degree-`P` B-spline basis on the knot vector
//!   `[lo; P+1] ++ active knots ++ [hi; P+1]`. The first B-spline is replaced
//!   by the constant column, so column 0 is always the intercept. Since the
//!   B-splines sum to one this spans the same space, and the additive design
//!   can drop column 0 of every covariate block without losing rank.
//!
//! The least-squares projection onto either basis is identical; only the
//! conditioning differs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Spline basis flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    TruncatedPower,
    BSpline,
}

/// Candidate-knot interval `[lo, hi)`. The last interval of a partition is
/// closed on the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Degree, candidate-knot intervals and basis flavor for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    degree: usize,
    intervals: Vec<Interval>,
    basis: BasisKind,
    /// Boundary of the covariate range; B-spline boundary knots sit here.
    lower: f64,
    upper: f64,
}

impl SplineSpec {
    /// Validates and builds a spec. `lower..=upper` is the covariate range
    /// and must contain every interval.
    pub fn new(degree: usize, intervals: Vec<Interval>, basis: BasisKind, lower: f64, upper: f64) -> Result<Self> {
        if degree < 1 {
            return invalid("spline degree must be at least 1");
        }
        if intervals.is_empty() {
            return invalid("at least one knot interval is required");
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return invalid(format!("covariate range [{lower}, {upper}] is empty"));
        }
        for (k, iv) in intervals.iter().enumerate() {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.width() <= 0.0 {
                return invalid(format!("interval {k} [{}, {}) has no width", iv.lo, iv.hi));
            }
            if iv.lo < lower || iv.hi > upper {
                return invalid(format!("interval {k} lies outside the covariate range"));
            }
            if k > 0 && iv.lo < intervals[k - 1].hi {
                return invalid(format!("intervals {} and {k} overlap or are unsorted", k - 1));
            }
        }
        Ok(Self { degree, intervals, basis, lower, upper })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// `K_max`, the number of candidate-knot intervals.
    pub fn max_knots(&self) -> usize {
        self.intervals.len()
    }

    /// Whether `g` lies in interval `k` (half-open, last interval closed).
    pub fn interval_contains(&self, k: usize, g: f64) -> bool {
        let iv = &self.intervals[k];
        if k + 1 == self.intervals.len() {
            iv.lo <= g && g <= iv.hi
        } else {
            iv.lo <= g && g < iv.hi
        }
    }
}

/// Knot indicators `z` and locations `γ` for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotConfiguration {
    pub z: Vec<bool>,
    pub gamma: Vec<f64>,
}

impl KnotConfiguration {
    /// No active knots; each `γ_k` at the midpoint of its interval.
    pub fn empty(spec: &SplineSpec) -> Self {
        Self {
            z: vec![false; spec.max_knots()],
            gamma: spec.intervals().iter().map(|iv| 0.5 * (iv.lo + iv.hi)).collect(),
        }
    }

    pub fn active_count(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self, spec: &SplineSpec) -> Result<()> {
        check_knots(&self.z, &self.gamma, spec)
    }
}

pub(crate) fn check_knots(z: &[bool], gamma: &[f64], spec: &SplineSpec) -> Result<()> {
    let k_max = spec.max_knots();
    if z.len() != k_max || gamma.len() != k_max {
        return invalid(format!("knot configuration has length {}/{}, expected {k_max}", z.len(), gamma.len()));
    }
    for (k, &g) in gamma.iter().enumerate() {
        if !spec.interval_contains(k, g) {
            return invalid(format!("gamma[{k}] = {g} is outside its interval"));
        }
    }
    Ok(())
}

/// Provenance of a design-matrix column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    Intercept,
    /// `x^order` of a covariate, `order >= 1`.
    Power {
        covariate: usize,
        order: usize,
    },
    /// `(x - γ_k)_+^P` for knot interval `k`.
    Knot {
        covariate: usize,
        k: usize,
    },
    /// B-spline number `index` (0-based, index 0 is replaced by the intercept).
    BSpline {
        covariate: usize,
        index: usize,
    },
}

impl Column {
    pub fn covariate(&self) -> Option<usize> {
        match *self {
            Column::Intercept => None,
            Column::Power { covariate, .. } | Column::Knot { covariate, .. } | Column::BSpline { covariate, .. } => {
                Some(covariate)
            }
        }
    }
}

/// Dense `n x q` design with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub columns: Vec<Column>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Intervals whose boundaries are every `n_x`-th sorted distinct value of
/// `x`, starting at the minimum. A trailing remainder becomes a final
/// interval ending at the maximum.
pub fn make_intervals(x: &[f64], n_x: usize) -> Result<Vec<Interval>> {
    if n_x < 2 {
        return invalid("n_x must be at least 2");
    }
    let mut sorted: Vec<f64> = x.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return invalid("covariate contains non-finite values");
    }
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 2 {
        return invalid("need at least 2 distinct covariate values");
    }
    let last = sorted.len() - 1;
    let mut bounds = vec![sorted[0]];
    let mut idx = n_x - 1;
    while idx <= last {
        bounds.push(sorted[idx]);
        idx += n_x;
    }
    if *bounds.last().unwrap() < sorted[last] {
        bounds.push(sorted[last]);
    }
    Ok(bounds.windows(2).map(|w| Interval { lo: w[0], hi: w[1] }).collect())
}

/// `count` equal-width intervals over `[lo, hi]`.
pub fn equal_intervals(lo: f64, hi: f64, count: usize) -> Result<Vec<Interval>> {
    if count == 0 {
        return invalid("interval count must be positive");
    }
    if !(lo < hi) {
        return invalid(format!("empty range [{lo}, {hi}]"));
    }
    let width = (hi - lo) / count as f64;
    Ok((0..count)
        .map(|k| Interval {
            lo: lo + k as f64 * width,
            hi: if k + 1 == count { hi } else { lo + (k + 1) as f64 * width },
        })
        .collect())
}

/// Intervals from explicit sorted boundaries `b_0 < b_1 < ... < b_K`.
pub fn intervals_from_bounds(bounds: &[f64]) -> Result<Vec<Interval>> {
    if bounds.len() < 2 {
        return invalid("need at least two interval boundaries");
    }
    if bounds.windows(2).any(|w| !(w[0] < w[1])) {
        return invalid("interval boundaries must be strictly increasing");
    }
    Ok(bounds.windows(2).map(|w| Interval { lo: w[0], hi: w[1] }).collect())
}

/// Drops the first and last interval so no knot can sit next to the
/// boundary.
pub fn exclude_edge_intervals(intervals: &[Interval]) -> Result<Vec<Interval>> {
    if intervals.len() < 3 {
        return invalid("excluding edge intervals needs at least 3 intervals");
    }
    Ok(intervals[1..intervals.len() - 1].to_vec())
}

/// Single-covariate design for `config` under `spec`.
pub fn build_design(x: &[f64], config: &KnotConfiguration, spec: &SplineSpec) -> Result<DesignMatrix> {
    config.validate(spec)?;
    design_from_slices(&[x], &[(&config.z, &config.gamma)], std::slice::from_ref(spec))
}

/// Additive design: one global intercept followed by every covariate's
/// non-intercept columns, covariates in order.
pub fn build_additive_design(
    x: &[&[f64]],
    configs: &[KnotConfiguration],
    specs: &[SplineSpec],
) -> Result<DesignMatrix> {
    if x.is_empty() {
        return invalid("additive design needs at least one covariate");
    }
    if configs.len() != x.len() || specs.len() != x.len() {
        return invalid("covariates, knot configurations and specs differ in count");
    }
    for (cfg, spec) in configs.iter().zip(specs) {
        cfg.validate(spec)?;
    }
    let knots: Vec<(&[bool], &[f64])> = configs.iter().map(|c| (&c.z[..], &c.gamma[..])).collect();
    design_from_slices(x, &knots, specs)
}

/// Assumes validated knots; shared by the public builders and the sampler.
pub(crate) fn design_from_slices(
    x: &[&[f64]],
    knots: &[(&[bool], &[f64])],
    specs: &[SplineSpec],
) -> Result<DesignMatrix> {
    let n = x[0].len();
    if x.iter().any(|col| col.len() != n) {
        return invalid("covariate columns differ in length");
    }
    let mut columns = vec![Column::Intercept];
    for (j, ((z, _), spec)) in knots.iter().zip(specs).enumerate() {
        let active = z.iter().filter(|&&b| b).count();
        match spec.basis {
            BasisKind::TruncatedPower => {
                columns.extend((1..=spec.degree).map(|order| Column::Power { covariate: j, order }));
                columns
                    .extend(z.iter().enumerate().filter(|(_, &on)| on).map(|(k, _)| Column::Knot { covariate: j, k }));
            }
            BasisKind::BSpline => {
                let m = spec.degree + 1 + active;
                columns.extend((1..m).map(|index| Column::BSpline { covariate: j, index }));
            }
        }
    }

    let mut values = DMatrix::<f64>::zeros(n, columns.len());
    values.column_mut(0).fill(1.0);
    let mut col = 1;
    for ((xj, (z, gamma)), spec) in x.iter().zip(knots).zip(specs) {
        let p = spec.degree;
        match spec.basis {
            BasisKind::TruncatedPower => {
                for (i, &xi) in xj.iter().enumerate() {
                    let mut pow = 1.0;
                    for order in 0..p {
                        pow *= xi;
                        values[(i, col + order)] = pow;
                    }
                }
                col += p;
                for (k, _) in z.iter().enumerate().filter(|(_, &on)| on) {
                    let g = gamma[k];
                    for (i, &xi) in xj.iter().enumerate() {
                        let d = xi - g;
                        values[(i, col)] = if d > 0.0 { d.powi(p as i32) } else { 0.0 };
                    }
                    col += 1;
                }
            }
            BasisKind::BSpline => {
                let (lo, hi) = spec.range();
                let interior: Vec<f64> = z.iter().zip(gamma.iter()).filter(|(&on, _)| on).map(|(_, &g)| g).collect();
                let knots = clamped_knot_vector(lo, hi, &interior, p);
                let m = p + 1 + interior.len();
                let tol = 1e-9 * (hi - lo);
                let mut row = vec![0.0; p + 1];
                for (i, &xi) in xj.iter().enumerate() {
                    if xi < lo - tol || xi > hi + tol {
                        return invalid(format!(
                            "B-spline evaluation point {xi} lies outside the covariate range [{lo}, {hi}]"
                        ));
                    }
                    let xi = xi.clamp(lo, hi);
                    let span = find_span(xi, &knots, p, m);
                    basis_funs(span, xi, p, &knots, &mut row);
                    // Nonzero functions are N_{span-p..=span}; function 0 is dropped.
                    for (r, &v) in row.iter().enumerate() {
                        let idx = span - p + r;
                        if idx >= 1 {
                            values[(i, col + idx - 1)] = v;
                        }
                    }
                }
                col += m - 1;
            }
        }
    }
    debug_assert_eq!(col, columns.len());
    Ok(DesignMatrix { values, columns })
}

fn clamped_knot_vector(lo: f64, hi: f64, interior: &[f64], p: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(interior.len() + 2 * (p + 1));
    t.extend(std::iter::repeat_n(lo, p + 1));
    t.extend_from_slice(interior);
    t.extend(std::iter::repeat_n(hi, p + 1));
    t
}

/// Largest `s` in `[p, m-1]` with `t[s] <= x`; `x == hi` maps to the last span.
fn find_span(x: f64, t: &[f64], p: usize, m: usize) -> usize {
    if x >= t[m] {
        return m - 1;
    }
    let mut s = p;
    while s + 1 < m && t[s + 1] <= x {
        s += 1;
    }
    s
}

/// Cox-de Boor triangle: fills `out[r] = N_{span-p+r, p}(x)`.
fn basis_funs(span: usize, x: f64, p: usize, t: &[f64], out: &mut [f64]) {
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    out[0] = 1.0;
    for j in 1..=p {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { out[r] / denom };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// Affine map of a covariate onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScaler {
    pub min: f64,
    pub max: f64,
}

impl UnitScaler {
    pub fn fit(x: &[f64]) -> Result<Self> {
        let (min, max) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return invalid("covariate must have at least 2 distinct finite values");
        }
        Ok(Self { min, max })
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}
