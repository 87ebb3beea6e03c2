use bqrspline::basis::{equal_intervals, BasisKind, SplineSpec};
use bqrspline::posterior::{log_marginal_posterior, LatentState, ModelData, PriorConfig, QuantileModelSpec};
use bqrspline::sampler::{run_chain, AcceptanceStats, KernelCounts, Sampler, SamplerConfig};
use bqrspline::simulate::{generate_example, Example};
use bqrspline::tuning::TunerState;
use bqrspline_testkit::{chi_square_p_value, integrate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Three candidate intervals, noisy sine data.
fn toy() -> (ModelData, QuantileModelSpec, LatentState) {
    let n = 40;
    let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<f64> = x.iter().map(|v| (5.0 * v).sin() + 0.6 * (rand::Rng::random::<f64>(&mut rng) - 0.5)).collect();
    let spline = SplineSpec::new(2, equal_intervals(0.0, 1.0, 3).unwrap(), BasisKind::BSpline, 0.0, 1.0).unwrap();
    let spec = QuantileModelSpec::new(0.5, spline, PriorConfig::new(1.0, 3).unwrap()).unwrap();
    let w: Vec<f64> = (0..n).map(|i| 0.2 + 0.01 * i as f64).collect();
    let state = LatentState { z: vec![false; 3], gamma: vec![0.2, 0.5, 0.8], w, c: 30.0 };
    (ModelData::single(x, y).unwrap(), spec, state)
}

fn z_index(z: &[bool]) -> usize {
    z.iter().enumerate().map(|(k, &b)| usize::from(b) << k).sum()
}

fn exact_z_target(data: &ModelData, spec: &QuantileModelSpec, base: &LatentState) -> Vec<f64> {
    let logs: Vec<f64> = (0..8)
        .map(|i| {
            let z: Vec<bool> = (0..3).map(|k| i >> k & 1 == 1).collect();
            let state = LatentState { z, ..base.clone() };
            log_marginal_posterior(&state, data, spec).unwrap().value()
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

#[test]
fn z_kernel_leaves_exact_target_invariant() {
    let (data, spec, state) = toy();
    let probs = exact_z_target(&data, &spec, &state);
    assert!(probs.iter().all(|&p| p > 1e-3), "toy target too concentrated: {probs:?}");
    let mut sampler = Sampler::new(&data, &spec, state).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [0u64; 8];
    for step in 0..200_000 {
        sampler.update_z(&mut rng).unwrap();
        if step % 10 == 9 {
            counts[z_index(&sampler.state().z)] += 1;
        }
    }
    let p = chi_square_p_value(&counts, &probs);
    assert!(p > 0.01, "p-value {p}: counts {counts:?} probs {probs:?}");
}

#[test]
fn c_kernel_matches_conditional_by_quadrature() {
    let (data, spec, mut state) = toy();
    state.z = vec![false, true, false];
    let log_target = |c: f64| {
        let s = LatentState { c, ..state.clone() };
        log_marginal_posterior(&s, &data, &spec).unwrap().value()
    };
    // Scale by the largest value on a coarse grid to keep exp() in range.
    let peak = (1..400).map(|i| log_target(i as f64 * 0.5)).fold(f64::NEG_INFINITY, f64::max);
    let density = |c: f64| if c > 0.0 { (log_target(c) - peak).exp() } else { 0.0 };
    let upper = 2000.0;
    let total = integrate(density, 0.0, upper);
    // Ten bins with equal target mass.
    let mut edges = vec![0.0];
    let mut lo = 0.0;
    for b in 1..10 {
        let goal = b as f64 / 10.0 * total;
        let (mut a, mut hi) = (lo, upper);
        for _ in 0..60 {
            let mid = 0.5 * (a + hi);
            if integrate(density, 0.0, mid) < goal {
                a = mid;
            } else {
                hi = mid;
            }
        }
        lo = 0.5 * (a + hi);
        edges.push(lo);
    }

    let mut sampler = Sampler::new(&data, &spec, state.clone()).unwrap();
    let mut tuner = TunerState::new(10.0, 0.44);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 1..=500 {
        sampler.update_c(&mut tuner, Some(t), &mut rng);
    }
    tuner.freeze();
    let mut counts = [0u64; 10];
    for step in 0..200_000 {
        sampler.update_c(&mut tuner, None, &mut rng);
        if step % 10 == 9 {
            let c = sampler.state().c;
            counts[edges.iter().rposition(|&e| c >= e).unwrap()] += 1;
        }
    }
    let p = chi_square_p_value(&counts, &[0.1; 10]);
    assert!(p > 0.01, "p-value {p}: {counts:?}");
}

#[test]
fn w_sweep_keeps_cache_consistent_with_direct_evaluation() {
    let (data, spec, mut state) = toy();
    state.z = vec![true, false, true];
    let mut sampler = Sampler::new(&data, &spec, state).unwrap();
    let mut tuners = vec![TunerState::new(0.1, 0.44); data.n()];
    let mut stats = AcceptanceStats { w_per_coordinate: vec![KernelCounts::default(); data.n()], ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for t in 1..=200 {
        sampler.update_w(&mut tuners, Some(t), &mut rng, &mut stats).unwrap();
        let direct = log_marginal_posterior(sampler.state(), &data, &spec).unwrap().value();
        let cached = sampler.log_posterior().value();
        assert!((direct - cached).abs() < 1e-8 * direct.abs().max(1.0), "{direct} vs {cached}");
        assert!(sampler.state().w.iter().all(|&w| w > 0.0));
    }
    assert_eq!(stats.w.proposed, 200 * data.n() as u64);
}

#[test]
fn same_seed_gives_identical_chains() {
    let data = generate_example(Example::Three, 3);
    let x: Vec<f64> = data.x.clone();
    let spline =
        SplineSpec::new(2, bqrspline::basis::make_intervals(&x, 5).unwrap(), BasisKind::BSpline, 0.0, 1.0).unwrap();
    let spec = QuantileModelSpec::new(0.5, spline, PriorConfig::new(3.0, 10).unwrap()).unwrap();
    let data = ModelData::single(x, data.y).unwrap();
    let config = SamplerConfig { n_tune: 30, n_burn: 30, n_record: 40, seed: 17, ..SamplerConfig::default() };
    let a = run_chain(&data, &spec, &config).unwrap();
    let b = run_chain(&data, &spec, &config).unwrap();
    assert_eq!(a, b);
    let c = run_chain(&data, &spec, &SamplerConfig { seed: 18, ..config }).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn recorded_states_have_positive_weights_and_scale() {
    let data = generate_example(Example::Two, 8);
    let spline = SplineSpec::new(2, equal_intervals(0.0, 1.0, 20).unwrap(), BasisKind::BSpline, 0.0, 1.0).unwrap();
    let spec = QuantileModelSpec::new(0.75, spline, PriorConfig::new(3.0, 10).unwrap()).unwrap();
    let model = ModelData::single(data.x, data.y).unwrap();
    let chain =
        run_chain(&model, &spec, &SamplerConfig { n_tune: 20, n_burn: 20, n_record: 50, ..SamplerConfig::default() })
            .unwrap();
    assert_eq!(chain.len(), 50);
    for (s, lp) in chain.samples.iter().zip(&chain.log_post) {
        assert!(s.c > 0.0 && s.w.iter().all(|&w| w > 0.0));
        assert!(s.active_count() <= 10);
        assert!(spec.gamma_in_support(&s.gamma));
        assert!(lp.is_finite());
        let direct = log_marginal_posterior(s, &model, &spec).unwrap().value();
        assert!((direct - lp.value()).abs() < 1e-8 * direct.abs());
    }
    assert!(chain.w_tuners.iter().all(|t| t.frozen) && chain.c_tuner.frozen);
}
