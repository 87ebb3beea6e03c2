//! End-to-end fitting on the original covariate scale.
//!
//! Covariates are mapped affinely onto `[0, 1]` before the knot intervals
//! are built; curves and knot locations are mapped back when reported.

use serde::{Deserialize, Serialize};

use crate::basis::{
    equal_intervals, exclude_edge_intervals, intervals_from_bounds, make_intervals, BasisKind, SplineSpec, UnitScaler,
};
use crate::error::{invalid, Result};
use crate::estimate::{additive_components, bma_curve, linspace, map_curve, ComponentCurves, CurveEstimate};
use crate::posterior::{ModelData, PriorConfig, QuantileModelSpec};
use crate::sampler::{run_chain, ChainOutput, SamplerConfig};

/// Points in the default evaluation grid.
pub const DEFAULT_GRID_POINTS: usize = 200;

/// How the candidate-knot intervals of a covariate are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotPlacement {
    /// Boundaries at every `n`-th sorted distinct covariate value.
    EveryNth(usize),
    /// Equal-width intervals over the covariate range.
    EqualWidth(usize),
    /// Explicit boundaries on the original covariate scale.
    Bounds(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub degree: usize,
    pub basis: BasisKind,
    pub placement: KnotPlacement,
    pub exclude_edge_intervals: bool,
    pub lambda: f64,
    pub max_knots: usize,
    pub sampler: SamplerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            basis: BasisKind::BSpline,
            placement: KnotPlacement::EveryNth(5),
            exclude_edge_intervals: false,
            lambda: 3.0,
            max_knots: 10,
            sampler: SamplerConfig::default(),
        }
    }
}

/// Unit-scale data, model spec and the scalers that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedModel {
    pub data: ModelData,
    pub spec: QuantileModelSpec,
    pub scalers: Vec<UnitScaler>,
}

/// Rescales covariates and builds the spline spec of every covariate. `L`
/// is capped at the number of intervals of the smallest covariate.
pub fn prepare(x: &[Vec<f64>], y: &[f64], p: f64, config: &FitConfig) -> Result<PreparedModel> {
    if x.is_empty() {
        return invalid("at least one covariate is required");
    }
    let mut scalers = Vec::with_capacity(x.len());
    let mut unit = Vec::with_capacity(x.len());
    let mut splines = Vec::with_capacity(x.len());
    for (j, col) in x.iter().enumerate() {
        let scaler = UnitScaler::fit(col).map_err(|e| crate::Error::InvalidInput(format!("covariate {j}: {e}")))?;
        let u: Vec<f64> = col.iter().map(|&v| scaler.to_unit(v)).collect();
        let mut intervals = match &config.placement {
            KnotPlacement::EveryNth(n_x) => make_intervals(&u, *n_x)?,
            KnotPlacement::EqualWidth(count) => equal_intervals(0.0, 1.0, *count)?,
            KnotPlacement::Bounds(bounds) => {
                let ub: Vec<f64> = bounds.iter().map(|&b| scaler.to_unit(b).clamp(0.0, 1.0)).collect();
                intervals_from_bounds(&ub)?
            }
        };
        if config.exclude_edge_intervals {
            intervals = exclude_edge_intervals(&intervals)?;
        }
        splines.push(SplineSpec::new(config.degree, intervals, config.basis, 0.0, 1.0)?);
        scalers.push(scaler);
        unit.push(u);
    }
    let k_min = splines.iter().map(SplineSpec::max_knots).min().unwrap_or(0);
    let max_knots = if config.max_knots > k_min {
        log::warn!("L = {} exceeds the {k_min} available knot intervals; using L = {k_min}", config.max_knots);
        k_min
    } else {
        config.max_knots
    };
    let priors = PriorConfig::new(config.lambda, max_knots)?;
    let spec = QuantileModelSpec::additive(p, splines, priors)?;
    let data = ModelData::new(unit, y.to_vec())?;
    if data.n() < config.degree + 2 {
        return invalid(format!("need at least {} observations for degree {}", config.degree + 2, config.degree));
    }
    Ok(PreparedModel { data, spec, scalers })
}

/// A fitted chain with everything needed to report curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub model: PreparedModel,
    pub chain: ChainOutput,
}

/// Fits the quantile level `p` with one chain.
pub fn fit(x: &[Vec<f64>], y: &[f64], p: f64, config: &FitConfig) -> Result<QuantileFit> {
    let model = prepare(x, y, p, config)?;
    let chain = run_chain(&model.data, &model.spec, &config.sampler)?;
    Ok(QuantileFit { model, chain })
}

impl PreparedModel {
    pub fn p(&self) -> f64 {
        self.spec.p()
    }

    /// Maps original-scale columns to the unit scale.
    pub fn to_unit(&self, cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if cols.len() != self.scalers.len() {
            return invalid(format!("expected {} covariate columns", self.scalers.len()));
        }
        Ok(cols.iter().zip(&self.scalers).map(|(c, s)| c.iter().map(|&v| s.to_unit(v)).collect()).collect())
    }

    /// `DEFAULT_GRID_POINTS` equally spaced points over the observed range of
    /// covariate `j`, original scale.
    pub fn default_grid(&self, j: usize) -> Vec<f64> {
        let s = self.scalers[j];
        linspace(s.min, s.max, DEFAULT_GRID_POINTS)
    }

    /// Active knot locations of a state per covariate, original scale.
    pub fn knot_locations(&self, z: &[bool], gamma: &[f64]) -> Vec<Vec<f64>> {
        self.spec
            .splines()
            .iter()
            .zip(self.spec.knot_offsets())
            .zip(&self.scalers)
            .map(|((spline, start), scaler)| {
                (start..start + spline.max_knots()).filter(|&k| z[k]).map(|k| scaler.from_unit(gamma[k])).collect()
            })
            .collect()
    }
}

impl QuantileFit {
    fn curve(&self, grid: &[f64], map: bool) -> Result<CurveEstimate> {
        if self.model.spec.covariates() != 1 {
            return invalid("single-curve estimates need a one-covariate model; use components()");
        }
        let unit = self.model.to_unit(&[grid.to_vec()])?;
        let points = [&unit[0][..]];
        let mut est = if map {
            map_curve(&self.chain, &self.model.data, &self.model.spec, &points)?
        } else {
            bma_curve(&self.chain, &self.model.data, &self.model.spec, &points)?
        };
        est.grid = grid.to_vec();
        Ok(est)
    }

    /// Model-averaged curve at original-scale grid points.
    pub fn bma(&self, grid: &[f64]) -> Result<CurveEstimate> {
        self.curve(grid, false)
    }

    /// Plug-in curve of the highest-posterior recorded state.
    pub fn map(&self, grid: &[f64]) -> Result<CurveEstimate> {
        self.curve(grid, true)
    }

    /// Model-averaged fit at the observed covariates.
    pub fn fitted(&self) -> Result<Vec<f64>> {
        let cols = self.model.data.columns();
        Ok(bma_curve(&self.chain, &self.model.data, &self.model.spec, &cols)?.values)
    }

    /// Centered additive components on original-scale grids.
    pub fn components(&self, grids: &[Vec<f64>]) -> Result<ComponentCurves> {
        let unit = self.model.to_unit(grids)?;
        let mut out = additive_components(&self.chain, &self.model.data, &self.model.spec, &unit)?;
        for (comp, grid) in out.components.iter_mut().zip(grids) {
            comp.grid = grid.clone();
        }
        Ok(out)
    }
}
