//! Noncrossing postprocessing of two separately fitted quantile chains.
//!
//! Pairs `(θ_lo, θ_hi)` drawn from the product of the two posteriors are
//! kept only when the plug-in curve at the lower level lies strictly below
//! the one at the upper level at every observed covariate value. Averaging
//! the plug-in curves over the kept pairs targets the product posterior
//! restricted to ordered curves. A convex combination of pointwise-ordered
//! pairs is itself ordered, so the output curves never cross at the
//! observed points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::{plug_in_curve, plug_in_curves, CurveEstimate, CurveKind, Points};
use crate::posterior::{LatentState, ModelData, QuantileModelSpec};
use crate::sampler::ChainOutput;

/// Below this kept fraction, `Auto` switches from aligned pairs to all pairs.
pub const AUTO_CARTESIAN_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combination {
    /// Pair sample `t` of one chain with sample `t` of the other.
    Aligned,
    /// Every sample of one chain with every sample of the other.
    CartesianProduct,
    /// Aligned when the chains have equal length and at least 5% of the
    /// aligned pairs are ordered, otherwise the full product.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightedCurves {
    pub curve_lo: CurveEstimate,
    pub curve_hi: CurveEstimate,
    pub kept: u64,
    pub total: u64,
    pub combination: Combination,
}

impl ReweightedCurves {
    pub fn kept_fraction(&self) -> f64 {
        self.kept as f64 / self.total as f64
    }
}

/// Strict pointwise ordering of two curves.
pub fn curves_ordered(lo: &[f64], hi: &[f64]) -> bool {
    lo.len() == hi.len() && lo.iter().zip(hi).all(|(a, b)| a < b)
}

/// Whether the plug-in curve of `state_lo` lies strictly below that of
/// `state_hi` at every observed covariate value. Singular states count as
/// violating the constraint.
pub fn ordering_indicator(
    state_lo: &LatentState,
    state_hi: &LatentState,
    data: &ModelData,
    spec_lo: &QuantileModelSpec,
    spec_hi: &QuantileModelSpec,
) -> bool {
    let points = data.columns();
    match (plug_in_curve(state_lo, data, spec_lo, &points), plug_in_curve(state_hi, data, spec_hi, &points)) {
        (Ok(lo), Ok(hi)) => curves_ordered(&lo, &hi),
        _ => false,
    }
}

/// Per-sample weights: how many kept pairs each sample belongs to.
struct PairCounts {
    lo: Vec<u64>,
    hi: Vec<u64>,
    kept: u64,
    total: u64,
}

fn aligned_counts(lo: &[Option<Vec<f64>>], hi: &[Option<Vec<f64>>]) -> PairCounts {
    let flags: Vec<u64> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => u64::from(curves_ordered(a, b)),
            _ => 0,
        })
        .collect();
    let kept = flags.iter().sum();
    PairCounts { lo: flags.clone(), hi: flags, kept, total: lo.len() as u64 }
}

fn cartesian_counts(lo: &[Option<Vec<f64>>], hi: &[Option<Vec<f64>>]) -> PairCounts {
    let rows: Vec<Vec<bool>> = lo
        .par_iter()
        .map(|a| match a {
            Some(a) => hi.iter().map(|b| b.as_ref().is_some_and(|b| curves_ordered(a, b))).collect(),
            None => vec![false; hi.len()],
        })
        .collect();
    let mut counts_lo = vec![0u64; lo.len()];
    let mut counts_hi = vec![0u64; hi.len()];
    for (i, row) in rows.iter().enumerate() {
        for (j, &ok) in row.iter().enumerate() {
            if ok {
                counts_lo[i] += 1;
                counts_hi[j] += 1;
            }
        }
    }
    let kept = counts_lo.iter().sum();
    PairCounts { lo: counts_lo, hi: counts_hi, kept, total: (lo.len() * hi.len()) as u64 }
}

fn weighted_curve(
    chain: &ChainOutput,
    counts: &[u64],
    kept: u64,
    data: &ModelData,
    spec: &QuantileModelSpec,
    grid: &Points<'_>,
) -> Result<CurveEstimate> {
    let picked: Vec<(usize, u64)> = counts.iter().copied().enumerate().filter(|(_, c)| *c > 0).collect();
    let curves: Vec<Vec<f64>> =
        picked.par_iter().map(|&(t, _)| plug_in_curve(&chain.samples[t], data, spec, grid)).collect::<Result<_>>()?;
    let mut sum = vec![0.0; grid[0].len()];
    for ((_, weight), curve) in picked.iter().zip(&curves) {
        for (s, v) in sum.iter_mut().zip(curve) {
            *s += *weight as f64 * v;
        }
    }
    Ok(CurveEstimate {
        grid: grid[0].to_vec(),
        values: sum.into_iter().map(|s| s / kept as f64).collect(),
        kind: CurveKind::Reweighted,
        p: spec.p(),
        skipped_states: 0,
    })
}

/// Reweighted lower and upper curves at `grid`, with the ordering checked
/// at the observed covariate values.
pub fn reweighted_estimate(
    chain_lo: &ChainOutput,
    chain_hi: &ChainOutput,
    combination: Combination,
    data: &ModelData,
    spec_lo: &QuantileModelSpec,
    spec_hi: &QuantileModelSpec,
    grid: &Points<'_>,
) -> Result<ReweightedCurves> {
    if !(spec_lo.p() < spec_hi.p()) {
        return invalid(format!("quantile levels must satisfy p1 < p2, got {} and {}", spec_lo.p(), spec_hi.p()));
    }
    if chain_lo.is_empty() || chain_hi.is_empty() {
        return invalid("both chains need recorded states");
    }
    if combination == Combination::Aligned && chain_lo.len() != chain_hi.len() {
        return invalid("aligned pairing requires chains of equal length");
    }
    let observed = data.columns();
    let lo = plug_in_curves(chain_lo, data, spec_lo, &observed)?;
    let hi = plug_in_curves(chain_hi, data, spec_hi, &observed)?;

    let (counts, used) = match combination {
        Combination::Aligned => (aligned_counts(&lo, &hi), Combination::Aligned),
        Combination::CartesianProduct => (cartesian_counts(&lo, &hi), Combination::CartesianProduct),
        Combination::Auto => {
            let aligned = (lo.len() == hi.len()).then(|| aligned_counts(&lo, &hi));
            match aligned {
                Some(c) if c.kept as f64 >= AUTO_CARTESIAN_THRESHOLD * c.total as f64 => (c, Combination::Aligned),
                _ => (cartesian_counts(&lo, &hi), Combination::CartesianProduct),
            }
        }
    };
    if counts.kept == 0 {
        return Err(Error::ConstraintInfeasible { total: counts.total });
    }
    let curve_lo = weighted_curve(chain_lo, &counts.lo, counts.kept, data, spec_lo, grid)?;
    let curve_hi = weighted_curve(chain_hi, &counts.hi, counts.kept, data, spec_hi, grid)?;
    Ok(ReweightedCurves { curve_lo, curve_hi, kept: counts.kept, total: counts.total, combination: used })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_strict_and_pointwise() {
        let a = [1.0, 2.0, 3.0];
        assert!(!curves_ordered(&a, &a));
        assert!(curves_ordered(&a, &[2.0, 3.0, 4.0]));
        assert!(!curves_ordered(&a, &[2.0, 1.5, 4.0]));
        assert!(!curves_ordered(&a, &[2.0, 2.0, 4.0]));
    }

    #[test]
    fn hand_enumerated_three_by_three() {
        let lo = vec![Some(vec![0.0, 0.0]), Some(vec![1.0, 1.0]), None];
        let hi = vec![Some(vec![0.5, 0.5]), Some(vec![2.0, 2.0]), Some(vec![1.5, -1.0])];
        let c = cartesian_counts(&lo, &hi);
        // lo0 < hi0, lo0 < hi1, lo1 < hi1; lo2 singular; hi2 crosses both.
        assert_eq!(c.kept, 3);
        assert_eq!(c.total, 9);
        assert_eq!(c.lo, vec![2, 1, 0]);
        assert_eq!(c.hi, vec![1, 2, 0]);

        let a = aligned_counts(&lo, &hi);
        assert_eq!(a.kept, 2);
        assert_eq!(a.total, 3);
    }
}
