//! Curve estimates from recorded chain states.
//!
//! Every recorded state `(z, γ, W, c)` defines a plug-in curve through the
//! conditional posterior mean `β̂ = c/(c+1) (X'W⁻¹X)⁻¹ X'W⁻¹ Y_W`. The BMA
//! estimate averages plug-in curves over the recorded states; the MAP
//! estimate takes the plug-in curve of the state with the largest
//! log-posterior.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::posterior::{shifted_response, LatentState, ModelData, QuantileModelSpec, WeightedStats};
use crate::sampler::ChainOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Bma,
    Map,
    Reweighted,
}

impl CurveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveKind::Bma => "bma",
            CurveKind::Map => "map",
            CurveKind::Reweighted => "reweighted",
        }
    }
}

/// A fitted quantile curve on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: CurveKind,
    pub p: f64,
    /// Recorded states left out because their design was singular.
    pub skipped_states: usize,
}

/// Evaluation points, one slice per covariate, all of equal length.
pub type Points<'a> = [&'a [f64]];

/// `E[β | z, γ, W, c, Y]` in the coefficients of the model's design basis.
pub fn posterior_beta_mean(state: &LatentState, data: &ModelData, spec: &QuantileModelSpec) -> Result<DVector<f64>> {
    let design = spec.design(&data.columns(), &state.z, &state.gamma)?;
    let y_w = shifted_response(data.y(), &state.w, spec.p());
    let stats = WeightedStats::new(&design.values, &y_w, &state.w);
    let shrink = state.c / (state.c + 1.0);
    Ok(stats.solve()? * shrink)
}

/// Plug-in curve of one state at `points`.
pub fn plug_in_curve(
    state: &LatentState,
    data: &ModelData,
    spec: &QuantileModelSpec,
    points: &Points<'_>,
) -> Result<Vec<f64>> {
    let beta = posterior_beta_mean(state, data, spec)?;
    let at = spec.design(points, &state.z, &state.gamma)?;
    Ok((at.values * beta).iter().copied().collect())
}

/// Plug-in curves of every recorded state, `None` for singular states.
pub fn plug_in_curves(
    chain: &ChainOutput,
    data: &ModelData,
    spec: &QuantileModelSpec,
    points: &Points<'_>,
) -> Result<Vec<Option<Vec<f64>>>> {
    check_points(points, spec)?;
    chain
        .samples
        .par_iter()
        .map(|state| match plug_in_curve(state, data, spec, points) {
            Ok(v) => Ok(Some(v)),
            Err(Error::SingularDesign) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn check_points(points: &Points<'_>, spec: &QuantileModelSpec) -> Result<usize> {
    if points.len() != spec.covariates() {
        return invalid(format!("expected {} covariate columns of evaluation points", spec.covariates()));
    }
    let m = points[0].len();
    if points.iter().any(|c| c.len() != m) {
        return invalid("evaluation point columns differ in length");
    }
    Ok(m)
}

fn warn_skipped(skipped: usize, total: usize) {
    if skipped * 100 > total {
        log::warn!("{skipped} of {total} recorded states had a singular design and were skipped");
    }
}

/// Model-averaged curve at `points`. The grid reported in the estimate is the
/// first covariate column.
pub fn bma_curve(
    chain: &ChainOutput,
    data: &ModelData,
    spec: &QuantileModelSpec,
    points: &Points<'_>,
) -> Result<CurveEstimate> {
    if chain.is_empty() {
        return invalid("chain has no recorded states");
    }
    let curves = plug_in_curves(chain, data, spec, points)?;
    let m = points[0].len();
    let mut sum = vec![0.0; m];
    let mut used = 0usize;
    for curve in curves.iter().flatten() {
        for (s, v) in sum.iter_mut().zip(curve) {
            *s += v;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::SingularDesign);
    }
    let skipped = curves.len() - used;
    warn_skipped(skipped, curves.len());
    Ok(CurveEstimate {
        grid: points[0].to_vec(),
        values: sum.into_iter().map(|s| s / used as f64).collect(),
        kind: CurveKind::Bma,
        p: spec.p(),
        skipped_states: skipped,
    })
}

/// Index of the recorded state with the largest log-posterior (first on ties).
pub fn map_index(chain: &ChainOutput) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (t, lp) in chain.log_post.iter().enumerate() {
        let v = lp.value();
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((t, v));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::NoFiniteState)
}

pub fn map_curve(
    chain: &ChainOutput,
    data: &ModelData,
    spec: &QuantileModelSpec,
    points: &Points<'_>,
) -> Result<CurveEstimate> {
    check_points(points, spec)?;
    let t = map_index(chain)?;
    let values = plug_in_curve(&chain.samples[t], data, spec, points)?;
    Ok(CurveEstimate { grid: points[0].to_vec(), values, kind: CurveKind::Map, p: spec.p(), skipped_states: 0 })
}

/// Per-covariate components of an additive fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCurves {
    pub intercept: f64,
    /// Component `j` on its grid, centered to mean zero over observed `x_j`.
    pub components: Vec<CurveEstimate>,
    /// Centered component `j` at the observed `x_j`, in row order.
    pub at_observed: Vec<Vec<f64>>,
    pub skipped_states: usize,
}

impl ComponentCurves {
    /// Additive fit at observation `i`: intercept plus every component.
    pub fn fitted(&self, i: usize) -> f64 {
        self.intercept + self.at_observed.iter().map(|c| c[i]).sum::<f64>()
    }

    /// Observations minus the intercept and every component except `j`.
    pub fn partial_residuals(&self, data: &ModelData, j: usize) -> Vec<f64> {
        data.y()
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let others: f64 = self.at_observed.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, c)| c[i]).sum();
                y - self.intercept - others
            })
            .collect()
    }
}

/// Model-averaged additive components. `grids[j]` is the evaluation grid of
/// covariate `j`.
pub fn additive_components(
    chain: &ChainOutput,
    data: &ModelData,
    spec: &QuantileModelSpec,
    grids: &[Vec<f64>],
) -> Result<ComponentCurves> {
    let d = spec.covariates();
    if grids.len() != d {
        return invalid(format!("expected {d} grids, got {}", grids.len()));
    }
    if chain.is_empty() {
        return invalid("chain has no recorded states");
    }
    let offsets = spec.knot_offsets();
    let n = data.n();

    // Per state: (β̂_0, per covariate (grid values, observed values)).
    type StateParts = (f64, Vec<(Vec<f64>, Vec<f64>)>);
    let per_state: Vec<Option<StateParts>> = chain
        .samples
        .par_iter()
        .map(|state| -> Result<Option<StateParts>> {
            let beta = match posterior_beta_mean(state, data, spec) {
                Ok(b) => b,
                Err(Error::SingularDesign) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut parts = Vec::with_capacity(d);
            let mut col = 1;
            for (j, spline) in spec.splines().iter().enumerate() {
                let range = offsets[j]..offsets[j] + spline.max_knots();
                let z = &state.z[range.clone()];
                let gamma = &state.gamma[range];
                let block = |x: &[f64]| -> Result<Vec<f64>> {
                    let dm = crate::basis::design_from_slices(&[x], &[(z, gamma)], std::slice::from_ref(spline))?;
                    let width = dm.ncols() - 1;
                    let coef = beta.rows(col, width);
                    Ok((dm.values.columns(1, width) * coef).iter().copied().collect())
                };
                let on_grid = block(&grids[j])?;
                let on_obs = block(data.column(j))?;
                let width = spline.degree() + z.iter().filter(|&&b| b).count();
                col += width;
                parts.push((on_grid, on_obs));
            }
            debug_assert_eq!(col, beta.len());
            Ok(Some((beta[0], parts)))
        })
        .collect::<Result<_>>()?;

    let used = per_state.iter().flatten().count();
    if used == 0 {
        return Err(Error::SingularDesign);
    }
    let skipped = per_state.len() - used;
    warn_skipped(skipped, per_state.len());
    let scale = 1.0 / used as f64;

    let mut intercept = 0.0;
    let mut grid_sums: Vec<Vec<f64>> = grids.iter().map(|g| vec![0.0; g.len()]).collect();
    let mut obs_sums = vec![vec![0.0; n]; d];
    for (b0, parts) in per_state.iter().flatten() {
        intercept += b0;
        for (j, (g, o)) in parts.iter().enumerate() {
            grid_sums[j].iter_mut().zip(g).for_each(|(s, v)| *s += v);
            obs_sums[j].iter_mut().zip(o).for_each(|(s, v)| *s += v);
        }
    }
    intercept *= scale;
    let mut components = Vec::with_capacity(d);
    let mut at_observed = Vec::with_capacity(d);
    for j in 0..d {
        let obs: Vec<f64> = obs_sums[j].iter().map(|s| s * scale).collect();
        let center = obs.iter().sum::<f64>() / n as f64;
        intercept += center;
        at_observed.push(obs.iter().map(|v| v - center).collect());
        components.push(CurveEstimate {
            grid: grids[j].clone(),
            values: grid_sums[j].iter().map(|s| s * scale - center).collect(),
            kind: CurveKind::Bma,
            p: spec.p(),
            skipped_states: skipped,
        });
    }
    Ok(ComponentCurves { intercept, components, at_observed, skipped_states: skipped })
}

/// Mean squared error between fitted values and the true curve.
pub fn mse(fitted: &[f64], truth: &[f64]) -> Result<f64> {
    if fitted.len() != truth.len() {
        return invalid("fitted and true curves differ in length");
    }
    if fitted.is_empty() {
        return invalid("empty curve");
    }
    Ok(fitted.iter().zip(truth).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / fitted.len() as f64)
}

/// `count` equally spaced points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| if i + 1 == count { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 })
            .collect(),
    }
}
