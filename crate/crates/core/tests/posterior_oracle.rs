use bqrspline::basis::{intervals_from_bounds, BasisKind, SplineSpec};
use bqrspline::posterior::{
    al_log_density, log_marginal_posterior, quad_form_s, LatentState, ModelData, PriorConfig, QuantileModelSpec,
};
use bqrspline_testkit::{
    al_density, al_density_by_mixture, brute_force_log_posterior, integrate, linear_spline_design, naive_s,
    tiny_instances, TinyInstance, TinyState,
};
use proptest::prelude::*;

fn tiny_spec(inst: &TinyInstance, basis: BasisKind) -> QuantileModelSpec {
    let intervals = intervals_from_bounds(&[0.0, 0.5, 1.0]).unwrap();
    let spline = SplineSpec::new(1, intervals, basis, 0.0, 1.0).unwrap();
    QuantileModelSpec::new(inst.p, spline, PriorConfig::new(inst.lambda, 1).unwrap()).unwrap()
}

fn oracle_offsets(inst: &TinyInstance, basis: BasisKind) -> Vec<f64> {
    let spec = tiny_spec(inst, basis);
    let data = ModelData::single(inst.x.clone(), inst.y.clone()).unwrap();
    inst.draws
        .iter()
        .map(|d| {
            let mut z = vec![false; 2];
            let mut gamma = vec![0.25, 0.75];
            if let Some((k, g)) = d.knot {
                z[k] = true;
                gamma[k] = g;
            }
            let state = LatentState { z, gamma, w: d.w.clone(), c: d.c };
            let fast = log_marginal_posterior(&state, &data, &spec).unwrap().value();
            let design = linear_spline_design(&inst.x, d.knot.map(|k| k.1));
            let slow = brute_force_log_posterior(
                &inst.y,
                inst.p,
                inst.lambda,
                &TinyState { design: &design, active_knots: usize::from(d.knot.is_some()), w: &d.w, c: d.c },
            );
            fast - slow
        })
        .collect()
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

#[test]
fn marginal_posterior_matches_brute_force_integration() {
    for inst in tiny_instances(11, 6, 9) {
        let d = oracle_offsets(&inst, BasisKind::TruncatedPower);
        assert!(spread(&d) < 1e-4, "n = {}: offsets {d:?}", inst.x.len());
    }
}

#[test]
fn b_spline_basis_gives_same_posterior_up_to_constant() {
    for inst in tiny_instances(12, 6, 9) {
        let d = oracle_offsets(&inst, BasisKind::BSpline);
        assert!(spread(&d) < 1e-4, "offsets {d:?}");
    }
}

#[test]
fn asymmetric_laplace_integrates_to_one() {
    for &p in &[0.05, 0.25, 0.5, 0.9] {
        for &sigma in &[0.1, 1.0, 3.0] {
            let f = |e: f64| al_log_density(p, sigma, e).unwrap().exp();
            let total = integrate(f, -2000.0 * sigma, 0.0) + integrate(f, 0.0, 2000.0 * sigma);
            assert!((total - 1.0).abs() < 1e-9, "p {p} sigma {sigma}: {total}");
        }
    }
}

#[test]
fn scale_mixture_reproduces_asymmetric_laplace() {
    let ps = [0.1, 0.25, 0.5, 0.75, 0.9];
    let sigmas = [0.2, 0.5, 1.0, 2.0, 5.0];
    let eps = [-3.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 3.0];
    for &p in &ps {
        for &sigma in &sigmas {
            for &e in &eps {
                let mixed = al_density_by_mixture(p, sigma, e);
                let direct = al_log_density(p, sigma, e).unwrap().exp();
                assert!((mixed - direct).abs() < 1e-6, "p {p} σ {sigma} ε {e}: {mixed} vs {direct}");
                assert!((direct - al_density(p, sigma, e)).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn quadratic_form_matches_explicit_inverse() {
    for inst in tiny_instances(13, 6, 6) {
        let spec = tiny_spec(&inst, BasisKind::TruncatedPower);
        for d in &inst.draws {
            let mut z = vec![false; 2];
            let mut gamma = vec![0.25, 0.75];
            if let Some((k, g)) = d.knot {
                z[k] = true;
                gamma[k] = g;
            }
            let design = spec.design(&[&inst.x], &z, &gamma).unwrap();
            let fast = quad_form_s(&inst.y, &design, &d.w, d.c, inst.p).unwrap();
            let slow = naive_s(&linear_spline_design(&inst.x, d.knot.map(|k| k.1)), &inst.y, &d.w, d.c, inst.p);
            assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
        }
    }
}

fn design_for(knots: &[f64], degree: usize, basis: BasisKind) -> (QuantileModelSpec, Vec<bool>, Vec<f64>) {
    let mut bounds = vec![0.0];
    bounds.extend((1..knots.len() + 1).map(|k| k as f64 / (knots.len() + 1) as f64));
    bounds.push(1.0);
    let intervals = intervals_from_bounds(&bounds).unwrap();
    let gamma: Vec<f64> = (0..intervals.len())
        .map(|k| knots.get(k).map_or(intervals[k].lo, |&t| intervals[k].lo + t * intervals[k].width()))
        .collect();
    let mut z = vec![false; intervals.len()];
    z[..knots.len()].iter_mut().for_each(|b| *b = true);
    let l = intervals.len();
    let spline = SplineSpec::new(degree, intervals, basis, 0.0, 1.0).unwrap();
    let spec = QuantileModelSpec::new(0.5, spline, PriorConfig::new(3.0, l).unwrap()).unwrap();
    (spec, z, gamma)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s_is_nonnegative_and_nonincreasing_in_c(
        y in prop::collection::vec(-5.0f64..5.0, 12),
        w in prop::collection::vec(0.01f64..5.0, 12),
        p in 0.05f64..0.95,
        c1 in 0.01f64..100.0,
        dc in 0.0f64..100.0,
    ) {
        let x: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let (spec, z, gamma) = design_for(&[0.5], 2, BasisKind::BSpline);
        let design = spec.design(&[&x], &z, &gamma).unwrap();
        let s1 = quad_form_s(&y, &design, &w, c1, p).unwrap();
        let s2 = quad_form_s(&y, &design, &w, c1 + dc, p).unwrap();
        prop_assert!(s1 >= 0.0 && s2 >= 0.0);
        prop_assert!(s2 <= s1 + 1e-9 * s1.max(1.0));
    }

    #[test]
    fn truncated_power_and_b_spline_projections_agree(
        y in prop::collection::vec(-5.0f64..5.0, 30),
        w in prop::collection::vec(0.05f64..3.0, 30),
        knots in prop::collection::vec(0.1f64..0.9, 0..4),
        degree in 1usize..4,
        c in 0.1f64..200.0,
    ) {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let (tp_spec, z, gamma) = design_for(&knots, degree, BasisKind::TruncatedPower);
        let (bs_spec, _, _) = design_for(&knots, degree, BasisKind::BSpline);
        let tp = tp_spec.design(&[&x], &z, &gamma).unwrap();
        let bs = bs_spec.design(&[&x], &z, &gamma).unwrap();
        prop_assert_eq!(tp.ncols(), bs.ncols());
        let s_tp = quad_form_s(&y, &tp, &w, c, 0.4).unwrap();
        let s_bs = quad_form_s(&y, &bs, &w, c, 0.4).unwrap();
        // Cubic truncated powers with small weights lose about eight digits
        // to conditioning; the B-spline value matches a 50-digit reference.
        prop_assert!((s_tp - s_bs).abs() < 1e-6 * s_tp.max(1.0), "{} vs {}", s_tp, s_bs);
    }

    #[test]
    fn b_spline_rows_sum_to_one_after_restoring_first_function(
        knots in prop::collection::vec(0.05f64..0.95, 0..5),
        degree in 1usize..4,
        xs in prop::collection::vec(0.0f64..=1.0, 1..20),
    ) {
        let (spec, z, gamma) = design_for(&knots, degree, BasisKind::BSpline);
        let design = spec.design(&[&xs], &z, &gamma).unwrap();
        prop_assert_eq!(design.ncols(), degree + 1 + knots.len());
        for i in 0..xs.len() {
            let row = design.values.row(i);
            prop_assert_eq!(row[0], 1.0);
            // The dropped first B-spline equals 1 minus the other B-splines.
            let rest: f64 = row.iter().skip(1).sum();
            prop_assert!(rest <= 1.0 + 1e-12 && rest >= -1e-12);
            prop_assert!(row.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn log_posterior_is_invariant_to_inactive_knot_locations(
        g0 in 0.0f64..0.5,
        g1 in 0.0f64..0.5,
        w in prop::collection::vec(0.1f64..2.0, 8),
        c in 0.5f64..20.0,
    ) {
        let x: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
        let data = ModelData::single(x, y).unwrap();
        let spline = SplineSpec::new(2, intervals_from_bounds(&[0.0, 0.5, 1.0]).unwrap(), BasisKind::BSpline, 0.0, 1.0).unwrap();
        let spec = QuantileModelSpec::new(0.3, spline, PriorConfig::new(2.0, 2).unwrap()).unwrap();
        let a = LatentState { z: vec![false, true], gamma: vec![g0, 0.7], w: w.clone(), c };
        let b = LatentState { z: vec![false, true], gamma: vec![g1, 0.7], w, c };
        let la = log_marginal_posterior(&a, &data, &spec).unwrap().value();
        let lb = log_marginal_posterior(&b, &data, &spec).unwrap().value();
        prop_assert_eq!(la, lb);
    }
}

#[test]
fn near_duplicate_knots_give_minus_infinity() {
    // Knots 1e-13 apart make the two hinge columns numerically collinear.
    let x: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let spline =
        SplineSpec::new(1, intervals_from_bounds(&[0.0, 0.5, 1.0]).unwrap(), BasisKind::TruncatedPower, 0.0, 1.0)
            .unwrap();
    let spec = QuantileModelSpec::new(0.5, spline, PriorConfig::new(3.0, 2).unwrap()).unwrap();
    let data = ModelData::single(x.clone(), x).unwrap();
    let state = LatentState { z: vec![true, true], gamma: vec![0.5 - 1e-13, 0.5], w: vec![1.0; 10], c: 1.0 };
    assert!(spec.gamma_in_support(&state.gamma));
    assert!(!log_marginal_posterior(&state, &data, &spec).unwrap().is_finite());
}
