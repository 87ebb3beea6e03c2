//! Automatic scaling of univariate random-walk proposals.
//!
//! A Robbins-Monro search on the proposal standard deviation towards a
//! target acceptance probability `p*` (0.44 for univariate updates). The
//! first 19 steps after a (re)start leave the scale untouched; after that
//! the scale moves up by `κ(1-p*)/j` on acceptance and down by `κp*/j` on
//! rejection, with `κ = σ/(p*(1-p*))`. Early in the run, a scale that drifts
//! more than a factor 3 from the anchor restarts the search from the new
//! value, at most 5 times.

use serde::{Deserialize, Serialize};

/// Target acceptance probability for univariate random-walk updates.
pub const DEFAULT_TARGET_ACCEPTANCE: f64 = 0.44;

/// Steps after a (re)start during which the scale is held fixed.
pub const WARMUP_STEPS: u32 = 20;
/// Restarts are only considered for iterations `t < RESTART_WINDOW`.
pub const RESTART_WINDOW: usize = 100;
pub const MAX_RESTARTS: u32 = 5;
/// Drift factor from the anchor that triggers a restart.
pub const RESTART_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunerState {
    /// Current proposal standard deviation `σ^t`.
    pub sigma: f64,
    /// Anchor `σ*` set at the last (re)start.
    pub anchor: f64,
    /// Steps since the last (re)start.
    pub j: u32,
    pub restarts: u32,
    pub frozen: bool,
    pub target: f64,
}

impl Default for TunerState {
    fn default() -> Self {
        Self::new(1.0, DEFAULT_TARGET_ACCEPTANCE)
    }
}

impl TunerState {
    pub fn new(initial_sigma: f64, target: f64) -> Self {
        assert!(initial_sigma > 0.0, "proposal scale must be positive");
        assert!(target > 0.0 && target < 1.0, "target acceptance must lie in (0, 1)");
        Self { sigma: initial_sigma, anchor: initial_sigma, j: 0, restarts: 0, frozen: false, target }
    }

    /// One tuning step after an MH update with acceptance probability
    /// `alpha`, decided by the uniform `u` (accepted iff `u < alpha`). `t` is
    /// the 1-based tuning iteration. Frozen tuners are returned unchanged.
    pub fn tune_step(self, alpha: f64, u: f64, t: usize) -> Self {
        if self.frozen {
            return self;
        }
        let mut next = self;
        next.j += 1;
        if next.j < WARMUP_STEPS {
            return next;
        }
        let ps = self.target;
        let kappa = self.sigma / (ps * (1.0 - ps));
        let j = f64::from(next.j);
        // u == alpha is a measure-zero tie; it falls on the rejection side.
        next.sigma = if u < alpha { self.sigma + kappa * (1.0 - ps) / j } else { self.sigma - kappa * ps / j };
        let drifted = next.sigma > RESTART_FACTOR * self.anchor || next.sigma < self.anchor / RESTART_FACTOR;
        if t < RESTART_WINDOW && drifted && next.restarts < MAX_RESTARTS {
            next.anchor = next.sigma;
            next.j = 0;
            next.restarts += 1;
        }
        next
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }
}
