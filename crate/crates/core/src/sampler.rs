//! Metropolis-Hastings within Gibbs over `(z, γ, W, c)`.
//!
//! One iteration runs `z_steps_per_gamma` knot-indicator moves, one sweep
//! over the knot locations, one random-walk sweep over the latent weights
//! and one random-walk move on `c`, in that order. The first `n_tune`
//! iterations adapt the proposal scales of the `w_i` and `c` kernels; the
//! scales are then frozen for burn-in and recording.
//!
//! The sampler keeps the active design and the weighted sufficient
//! statistics of the current state, so a `w_i` move costs a rank-one update
//! and a small Cholesky factorization instead of a pass over the data.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::posterior::{
    assemble_log_posterior, mixture_shift, s_from_parts, shifted_response, LatentState, LogPosteriorValue, ModelData,
    QuantileModelSpec, WeightedStats,
};
use crate::tuning::{TunerState, DEFAULT_TARGET_ACCEPTANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_tune: usize,
    pub n_burn: usize,
    pub n_record: usize,
    pub z_steps_per_gamma: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    /// Keep the per-iteration proposal scales of every tuned kernel.
    pub trace_tuners: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_tune: 500,
            n_burn: 500,
            n_record: 1500,
            z_steps_per_gamma: 20,
            seed: 0,
            target_acceptance: DEFAULT_TARGET_ACCEPTANCE,
            trace_tuners: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_record == 0 {
            return invalid("n_record must be at least 1");
        }
        if self.z_steps_per_gamma == 0 {
            return invalid("z_steps_per_gamma must be at least 1");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return invalid("target acceptance must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Which knot-indicator move was proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZMove {
    AddDelete,
    Swap,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl KernelCounts {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Accept counts per kernel over one phase of the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub z_add_delete: KernelCounts,
    pub z_swap: KernelCounts,
    /// Independence moves of active knot locations only.
    pub gamma: KernelCounts,
    pub w: KernelCounts,
    pub w_per_coordinate: Vec<KernelCounts>,
    pub c: KernelCounts,
}

impl AcceptanceStats {
    fn new(n: usize) -> Self {
        Self { w_per_coordinate: vec![KernelCounts::default(); n], ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseAcceptance {
    pub tuning: AcceptanceStats,
    pub burn_in: AcceptanceStats,
    pub recorded: AcceptanceStats,
}

/// Proposal scales after every iteration, all phases.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TunerTrace {
    pub c: Vec<f64>,
    pub w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<LatentState>,
    pub log_post: Vec<LogPosteriorValue>,
    pub acceptance: PhaseAcceptance,
    /// Frozen tuner states used after the tuning phase.
    pub w_tuners: Vec<TunerState>,
    pub c_tuner: TunerState,
    pub tuner_trace: Option<TunerTrace>,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Independent random streams per kernel, all derived from one seed.
#[derive(Debug, Clone)]
pub struct KernelStreams {
    pub init: ChaCha8Rng,
    pub z: ChaCha8Rng,
    pub gamma: ChaCha8Rng,
    pub w: ChaCha8Rng,
    pub c: ChaCha8Rng,
}

impl KernelStreams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self { init: stream(0), z: stream(1), gamma: stream(2), w: stream(3), c: stream(4) }
    }
}

/// Cached quantities of the current state.
#[derive(Debug, Clone)]
struct Cache {
    design: DMatrix<f64>,
    stats: WeightedStats,
    /// `b'G⁻¹b`, `None` when the active design is singular.
    projected: Option<f64>,
    sum_w: f64,
    sum_log_w: f64,
    log_post: f64,
}

/// Outcome of one knot-indicator move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZOutcome {
    pub accepted: bool,
    pub kind: ZMove,
}

/// The chain's current state together with its cached evaluation.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    data: &'a ModelData,
    spec: &'a QuantileModelSpec,
    state: LatentState,
    cache: Cache,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a ModelData, spec: &'a QuantileModelSpec, state: LatentState) -> Result<Self> {
        state.validate(spec, data.n())?;
        if data.columns().len() != spec.covariates() {
            return invalid("data and model differ in covariate count");
        }
        let cache = evaluate(data, spec, &state)?;
        Ok(Self { data, spec, state, cache })
    }

    /// Draws a starting state from the priors (w_i ~ Exp(1)), retrying until
    /// the active design is nonsingular.
    pub fn from_prior<R: Rng>(data: &'a ModelData, spec: &'a QuantileModelSpec, rng: &mut R) -> Result<Self> {
        const ATTEMPTS: usize = 1000;
        for _ in 0..ATTEMPTS {
            let state = draw_prior_state(data.n(), spec, rng);
            let sampler = Self::new(data, spec, state)?;
            if sampler.cache.log_post.is_finite() {
                return Ok(sampler);
            }
        }
        invalid(format!("no prior draw in {ATTEMPTS} attempts gave a nonsingular design"))
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn log_posterior(&self) -> LogPosteriorValue {
        LogPosteriorValue(self.cache.log_post)
    }

    fn log_post_with_knots(&self, z: &[bool], gamma: &[f64]) -> Result<(f64, Option<Cache>)> {
        if !self.spec.log_prior_z(z).is_finite() {
            return Ok((f64::NEG_INFINITY, None));
        }
        let design = self.spec.design(&self.data.columns(), z, gamma)?;
        let y_w = shifted_response(self.data.y(), &self.state.w, self.spec.p());
        let stats = WeightedStats::new(&design.values, &y_w, &self.state.w);
        let projected = match stats.projected() {
            Ok(v) => v,
            Err(Error::SingularDesign) => return Ok((f64::NEG_INFINITY, None)),
            Err(e) => return Err(e),
        };
        let lp = self.assemble(
            z,
            design.ncols(),
            self.state.c,
            stats.yty,
            projected,
            self.cache.sum_w,
            self.cache.sum_log_w,
        );
        let cache = Cache {
            design: design.values,
            stats,
            projected: Some(projected),
            sum_w: self.cache.sum_w,
            sum_log_w: self.cache.sum_log_w,
            log_post: lp,
        };
        Ok((lp, Some(cache)))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(&self, z: &[bool], q: usize, c: f64, yty: f64, projected: f64, sum_w: f64, sum_log_w: f64) -> f64 {
        let s = s_from_parts(yty, projected, c);
        assemble_log_posterior(self.spec, z, self.data.n(), q, c, s, sum_w, sum_log_w)
    }

    /// Add/delete (probability 1/2) or swap move on the knot indicators.
    ///
    /// A swap exchanges one active with one inactive indicator; when either
    /// set is empty the move falls back to add/delete and the Hastings ratio
    /// uses the exact proposal probabilities.
    pub fn update_z<R: Rng>(&mut self, rng: &mut R) -> Result<ZOutcome> {
        let k_total = self.state.z.len();
        let active: Vec<usize> = (0..k_total).filter(|&k| self.state.z[k]).collect();
        let swap_possible = |count: usize| count > 0 && count < k_total;
        let want_swap = rng.random::<f64>() < 0.5;

        let mut proposal = self.state.z.clone();
        let (kind, log_q_ratio) = if want_swap && swap_possible(active.len()) {
            let inactive: Vec<usize> = (0..k_total).filter(|&k| !self.state.z[k]).collect();
            let i = active[rng.random_range(0..active.len())];
            let j = inactive[rng.random_range(0..inactive.len())];
            proposal.swap(i, j);
            (ZMove::Swap, 0.0)
        } else {
            let k = rng.random_range(0..k_total);
            proposal[k] = !proposal[k];
            let new_count = if proposal[k] { active.len() + 1 } else { active.len() - 1 };
            // q(z -> z') = (1/K)(1/2 + 1/2 · [no swap possible at z]).
            let forward: f64 = if swap_possible(active.len()) { 0.5 } else { 1.0 };
            let backward = if swap_possible(new_count) { 0.5 } else { 1.0 };
            (ZMove::AddDelete, (backward / forward).ln())
        };
        let u: f64 = rng.random();
        let (lp, cache) = self.log_post_with_knots(&proposal, &self.state.gamma)?;
        let accepted = u.ln() < lp - self.cache.log_post + log_q_ratio;
        if accepted {
            self.state.z = proposal;
            self.cache = cache.expect("accepted proposal has a finite posterior");
        }
        Ok(ZOutcome { accepted, kind })
    }

    /// One sweep over the knot locations. Inactive locations are redrawn from
    /// their uniform prior; active ones get an independence move with the
    /// prior as proposal. Returns the counts of the active moves.
    pub fn update_gamma<R: Rng>(&mut self, rng: &mut R) -> Result<KernelCounts> {
        let mut counts = KernelCounts::default();
        for flat in 0..self.state.gamma.len() {
            let (cov, k) = self.spec.locate_knot(flat);
            let proposal = sample_interval(&self.spec.splines()[cov], k, rng);
            if !self.state.z[flat] {
                self.state.gamma[flat] = proposal;
                continue;
            }
            let u: f64 = rng.random();
            let mut gamma = self.state.gamma.clone();
            gamma[flat] = proposal;
            let (lp, cache) = self.log_post_with_knots(&self.state.z, &gamma)?;
            let accepted = u.ln() < lp - self.cache.log_post;
            if accepted {
                self.state.gamma = gamma;
                self.cache = cache.expect("accepted proposal has a finite posterior");
            }
            counts.record(accepted);
        }
        Ok(counts)
    }

    /// Random-walk sweep over every `w_i`. With `tuning = Some(t)`, each
    /// coordinate's tuner takes a step after its update.
    pub fn update_w<R: Rng>(
        &mut self,
        tuners: &mut [TunerState],
        tuning: Option<usize>,
        rng: &mut R,
        stats: &mut AcceptanceStats,
    ) -> Result<()> {
        let n = self.data.n();
        if tuners.len() != n {
            return invalid("one tuner per latent weight is required");
        }
        if self.cache.projected.is_some() {
            // Refresh the statistics so rank-one updates do not accumulate drift.
            let y_w = shifted_response(self.data.y(), &self.state.w, self.spec.p());
            self.cache.stats = WeightedStats::new(&self.cache.design, &y_w, &self.state.w);
            self.cache.projected = Some(self.cache.stats.projected()?);
        }
        let shift = mixture_shift(self.spec.p());
        let q = self.cache.design.ncols();
        let mut row = vec![0.0; q];
        for i in 0..n {
            let step: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            let old = self.state.w[i];
            let new = old + tuners[i].sigma * step;
            let mut alpha = 0.0;
            let mut candidate = None;
            if new > 0.0 && self.cache.projected.is_some() {
                for (a, r) in row.iter_mut().enumerate() {
                    *r = self.cache.design[(i, a)];
                }
                let y = self.data.y()[i];
                let mut next = self.cache.stats.clone();
                next.replace_row(&row, y - old * shift, old, y - new * shift, new);
                if let Ok(projected) = next.projected() {
                    let sum_w = self.cache.sum_w - old + new;
                    let sum_log_w = self.cache.sum_log_w - old.ln() + new.ln();
                    let lp = self.assemble(&self.state.z, q, self.state.c, next.yty, projected, sum_w, sum_log_w);
                    alpha = (lp - self.cache.log_post).exp().min(1.0);
                    candidate = Some((next, projected, sum_w, sum_log_w, lp));
                }
            }
            let accepted = u < alpha;
            if accepted {
                let (next, projected, sum_w, sum_log_w, lp) = candidate.expect("accepted move has a candidate");
                self.state.w[i] = new;
                self.cache.stats = next;
                self.cache.projected = Some(projected);
                self.cache.sum_w = sum_w;
                self.cache.sum_log_w = sum_log_w;
                self.cache.log_post = lp;
            }
            stats.w.record(accepted);
            stats.w_per_coordinate[i].record(accepted);
            if let Some(t) = tuning {
                tuners[i] = tuners[i].tune_step(alpha, u, t);
            }
        }
        Ok(())
    }

    /// Random-walk move on `c`.
    pub fn update_c<R: Rng>(&mut self, tuner: &mut TunerState, tuning: Option<usize>, rng: &mut R) -> bool {
        let step: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let new = self.state.c + tuner.sigma * step;
        let mut alpha = 0.0;
        let mut lp = f64::NEG_INFINITY;
        if let (true, Some(projected)) = (new > 0.0, self.cache.projected) {
            lp = self.assemble(
                &self.state.z,
                self.cache.design.ncols(),
                new,
                self.cache.stats.yty,
                projected,
                self.cache.sum_w,
                self.cache.sum_log_w,
            );
            alpha = (lp - self.cache.log_post).exp().min(1.0);
        }
        let accepted = u < alpha;
        if accepted {
            self.state.c = new;
            self.cache.log_post = lp;
        }
        if let Some(t) = tuning {
            *tuner = tuner.tune_step(alpha, u, t);
        }
        accepted
    }

    /// Full iteration in the fixed order z-block, γ, w, c.
    fn iterate(
        &mut self,
        config: &SamplerConfig,
        streams: &mut KernelStreams,
        w_tuners: &mut [TunerState],
        c_tuner: &mut TunerState,
        tuning: Option<usize>,
        stats: &mut AcceptanceStats,
    ) -> Result<()> {
        for _ in 0..config.z_steps_per_gamma {
            let out = self.update_z(&mut streams.z)?;
            match out.kind {
                ZMove::AddDelete => stats.z_add_delete.record(out.accepted),
                ZMove::Swap => stats.z_swap.record(out.accepted),
            }
        }
        let g = self.update_gamma(&mut streams.gamma)?;
        stats.gamma.proposed += g.proposed;
        stats.gamma.accepted += g.accepted;
        self.update_w(w_tuners, tuning, &mut streams.w, stats)?;
        let acc = self.update_c(c_tuner, tuning, &mut streams.c);
        stats.c.record(acc);
        Ok(())
    }
}

fn evaluate(data: &ModelData, spec: &QuantileModelSpec, state: &LatentState) -> Result<Cache> {
    let design = spec.design(&data.columns(), &state.z, &state.gamma)?;
    let y_w = shifted_response(data.y(), &state.w, spec.p());
    let stats = WeightedStats::new(&design.values, &y_w, &state.w);
    let sum_w = state.w.iter().sum();
    let sum_log_w = state.w.iter().map(|w| w.ln()).sum();
    let projected = match stats.projected() {
        Ok(v) => Some(v),
        Err(Error::SingularDesign) => None,
        Err(e) => return Err(e),
    };
    let log_post = match projected {
        Some(pr) if spec.log_prior_z(&state.z).is_finite() => {
            let s = s_from_parts(stats.yty, pr, state.c);
            assemble_log_posterior(spec, &state.z, data.n(), design.ncols(), state.c, s, sum_w, sum_log_w)
        }
        _ => f64::NEG_INFINITY,
    };
    Ok(Cache { design: design.values, stats, projected, sum_w, sum_log_w, log_post })
}

/// Uniform draw from knot interval `k`.
pub(crate) fn sample_interval<R: Rng>(spline: &crate::basis::SplineSpec, k: usize, rng: &mut R) -> f64 {
    let iv = spline.intervals()[k];
    let g = iv.lo + rng.random::<f64>() * iv.width();
    if spline.interval_contains(k, g) {
        g
    } else {
        iv.lo
    }
}

/// Knot count from the truncated Poisson prior by inverse CDF.
fn draw_knot_count<R: Rng>(lambda: f64, max: usize, rng: &mut R) -> usize {
    let mut weights = Vec::with_capacity(max + 1);
    let mut w = 1.0;
    for k in 0..=max {
        if k > 0 {
            w *= lambda / k as f64;
        }
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    max
}

/// A state drawn from the priors: knot counts from the truncated Poisson,
/// a uniformly chosen configuration of that size, uniform locations,
/// `w_i ~ Exp(1)` and `c ~ IG(1, 2n)` by inverse CDF.
pub fn draw_prior_state<R: Rng>(n: usize, spec: &QuantileModelSpec, rng: &mut R) -> LatentState {
    let mut z = Vec::with_capacity(spec.total_knots());
    let mut gamma = Vec::with_capacity(spec.total_knots());
    for spline in spec.splines() {
        let k_max = spline.max_knots();
        let count = draw_knot_count(spec.priors().lambda, spec.priors().max_knots.min(k_max), rng);
        let chosen = rand::seq::index::sample(rng, k_max, count);
        let mut block = vec![false; k_max];
        for k in chosen.iter() {
            block[k] = true;
        }
        z.extend(block);
        for k in 0..k_max {
            gamma.push(sample_interval(spline, k, rng));
        }
    }
    let w = (0..n).map(|_| rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE)).collect();
    let c = loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            break -2.0 * n as f64 / u.ln();
        }
    };
    LatentState { z, gamma, w, c }
}

/// Runs tuning, burn-in and recording phases from a prior draw.
pub fn run_chain(data: &ModelData, spec: &QuantileModelSpec, config: &SamplerConfig) -> Result<ChainOutput> {
    config.validate()?;
    let mut streams = KernelStreams::from_seed(config.seed);
    let sampler = Sampler::from_prior(data, spec, &mut streams.init)?;
    run_chain_from(sampler, config, streams)
}

/// Like [`run_chain`] but from a given starting sampler and streams.
pub fn run_chain_from(
    mut sampler: Sampler<'_>,
    config: &SamplerConfig,
    mut streams: KernelStreams,
) -> Result<ChainOutput> {
    config.validate()?;
    let n = sampler.data.n();
    let mut w_tuners = vec![TunerState::new(1.0, config.target_acceptance); n];
    let mut c_tuner = TunerState::new(1.0, config.target_acceptance);
    let mut acceptance = PhaseAcceptance {
        tuning: AcceptanceStats::new(n),
        burn_in: AcceptanceStats::new(n),
        recorded: AcceptanceStats::new(n),
    };
    let mut trace = config.trace_tuners.then(TunerTrace::default);
    let push_trace = |trace: &mut Option<TunerTrace>, w: &[TunerState], c: &TunerState| {
        if let Some(tr) = trace.as_mut() {
            tr.c.push(c.sigma);
            tr.w.push(w.iter().map(|t| t.sigma).collect());
        }
    };

    for t in 1..=config.n_tune {
        sampler.iterate(config, &mut streams, &mut w_tuners, &mut c_tuner, Some(t), &mut acceptance.tuning)?;
        push_trace(&mut trace, &w_tuners, &c_tuner);
    }
    w_tuners.iter_mut().for_each(TunerState::freeze);
    c_tuner.freeze();

    for _ in 0..config.n_burn {
        sampler.iterate(config, &mut streams, &mut w_tuners, &mut c_tuner, None, &mut acceptance.burn_in)?;
        push_trace(&mut trace, &w_tuners, &c_tuner);
    }

    let mut samples = Vec::with_capacity(config.n_record);
    let mut log_post = Vec::with_capacity(config.n_record);
    for _ in 0..config.n_record {
        sampler.iterate(config, &mut streams, &mut w_tuners, &mut c_tuner, None, &mut acceptance.recorded)?;
        push_trace(&mut trace, &w_tuners, &c_tuner);
        samples.push(sampler.state.clone());
        log_post.push(sampler.log_posterior());
    }
    if log_post.iter().all(|lp| !lp.is_finite()) {
        return Err(Error::NoFiniteState);
    }
    Ok(ChainOutput { samples, log_post, acceptance, w_tuners, c_tuner, tuner_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{intervals_from_bounds, BasisKind, SplineSpec};
    use crate::posterior::{log_marginal_posterior, PriorConfig};

    fn toy(max_knots: usize) -> (ModelData, QuantileModelSpec) {
        let x: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let y: Vec<f64> =
            x.iter().enumerate().map(|(i, v)| (3.0 * v).sin() + 0.1 * ((i * 7 % 5) as f64 - 2.0)).collect();
        let spline =
            SplineSpec::new(1, intervals_from_bounds(&[0.0, 0.3, 0.6, 1.0]).unwrap(), BasisKind::BSpline, 0.0, 1.0)
                .unwrap();
        let spec = QuantileModelSpec::new(0.5, spline, PriorConfig::new(3.0, max_knots).unwrap()).unwrap();
        (ModelData::single(x, y).unwrap(), spec)
    }

    fn state(z: Vec<bool>) -> LatentState {
        LatentState { z, gamma: vec![0.15, 0.45, 0.8], w: vec![1.0; 12], c: 12.0 }
    }

    #[test]
    fn cached_log_posterior_matches_direct_evaluation() {
        let (data, spec) = toy(3);
        let mut streams = KernelStreams::from_seed(7);
        let mut s = Sampler::new(&data, &spec, state(vec![true, false, true])).unwrap();
        let mut tuners = vec![TunerState::default(); 12];
        let mut c_tuner = TunerState::default();
        let mut stats = AcceptanceStats::new(12);
        for t in 1..=30 {
            s.iterate(&SamplerConfig::default(), &mut streams, &mut tuners, &mut c_tuner, Some(t), &mut stats).unwrap();
            let direct = log_marginal_posterior(s.state(), &data, &spec).unwrap().value();
            assert!((direct - s.log_posterior().value()).abs() < 1e-8 * direct.abs().max(1.0), "iteration {t}");
        }
    }

    #[test]
    fn proposals_above_truncation_are_rejected() {
        let (data, spec) = toy(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = Sampler::new(&data, &spec, state(vec![false, true, false])).unwrap();
        for _ in 0..500 {
            s.update_z(&mut rng).unwrap();
            assert!(s.state().active_count() <= 1);
        }
    }

    #[test]
    fn duplicated_knot_column_is_rejected() {
        // A knot at the boundary duplicates the linear column.
        let (data, spec) = toy(3);
        let mut s = Sampler::new(&data, &spec, state(vec![false, false, false])).unwrap();
        let mut gamma = s.state.gamma.clone();
        gamma[0] = 0.0;
        let (lp, cache) = s.log_post_with_knots(&[true, false, false], &gamma).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
        assert!(cache.is_none());
        s.state.gamma = gamma;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let before = s.state().z.clone();
            let out = s.update_z(&mut rng).unwrap();
            if out.accepted {
                assert!(!s.state().z[0] || before[0], "singular knot accepted");
            }
        }
    }

    #[test]
    fn inactive_locations_always_move() {
        let (data, spec) = toy(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = Sampler::new(&data, &spec, state(vec![false, false, false])).unwrap();
        let before = s.state().gamma.clone();
        let counts = s.update_gamma(&mut rng).unwrap();
        assert_eq!(counts.proposed, 0);
        assert!(before.iter().zip(&s.state().gamma).all(|(a, b)| a != b));
        assert!(spec.gamma_in_support(&s.state().gamma));
    }

    #[test]
    fn zero_scale_walks_always_accept() {
        let (data, spec) = toy(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = Sampler::new(&data, &spec, state(vec![true, false, false])).unwrap();
        let tiny = TunerState::new(1e-300, 0.44);
        let mut tuners = vec![tiny; 12];
        let mut stats = AcceptanceStats::new(12);
        s.update_w(&mut tuners, None, &mut rng, &mut stats).unwrap();
        assert_eq!(stats.w.accepted, 12);
        let mut ct = tiny;
        assert!(s.update_c(&mut ct, None, &mut rng));
    }

    #[test]
    fn negative_proposals_are_rejected() {
        let (data, spec) = toy(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut st = state(vec![true, false, false]);
        st.w = vec![1e-9; 12];
        st.c = 1e-9;
        let mut s = Sampler::new(&data, &spec, st).unwrap();
        let huge = TunerState::new(1e6, 0.44);
        let mut tuners = vec![huge; 12];
        let mut stats = AcceptanceStats::new(12);
        for _ in 0..5 {
            s.update_w(&mut tuners, None, &mut rng, &mut stats).unwrap();
        }
        assert!(s.state().w.iter().all(|&w| w > 0.0));
        let mut ct = huge;
        for _ in 0..20 {
            s.update_c(&mut ct, None, &mut rng);
            assert!(s.state().c > 0.0);
        }
    }

    #[test]
    fn zero_records_is_an_error() {
        let (data, spec) = toy(3);
        let cfg = SamplerConfig { n_record: 0, ..SamplerConfig::default() };
        assert!(matches!(run_chain(&data, &spec, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn tuners_freeze_after_tuning() {
        let (data, spec) = toy(3);
        let cfg = SamplerConfig {
            n_tune: 40,
            n_burn: 10,
            n_record: 10,
            trace_tuners: true,
            seed: 9,
            ..SamplerConfig::default()
        };
        let out = run_chain(&data, &spec, &cfg).unwrap();
        let trace = out.tuner_trace.unwrap();
        assert_eq!(trace.c.len(), 60);
        assert!(trace.c[39..].iter().all(|&s| s == trace.c[39]));
        assert!(trace.w[39..].iter().all(|row| row == &trace.w[39]));
        assert_eq!(out.c_tuner.sigma, trace.c[39]);
        assert!(out.c_tuner.frozen);
    }

    #[test]
    fn prior_draws_respect_supports() {
        let (_, spec) = toy(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = draw_prior_state(12, &spec, &mut rng);
            assert!(s.active_count() <= 2);
            assert!(spec.gamma_in_support(&s.gamma));
            assert!(s.w.iter().all(|&w| w > 0.0) && s.c > 0.0);
        }
    }
}
