//! Simulated benchmark datasets.
//!
//! Three standard curve-fitting test functions with right-skewed noise
//! `Exp(rate 4) - 0.175` (median `ln 2 / 4 - 0.175 ≈ -0.0017`). The true
//! median curve is reported alongside each observation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rate of the exponential noise component.
pub const NOISE_RATE: f64 = 4.0;
/// Shift applied to the exponential noise.
pub const NOISE_SHIFT: f64 = -0.175;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Example {
    /// Two Gaussian bumps, `n = 200` uniform design points on `[0, 1]`.
    One,
    /// `sin(2t) + 2 exp(-16 t²)` on a regular grid of 201 points of `[-2, 2]`.
    Two,
    /// `sin(t) + 2 exp(-30 t²)` on a regular grid of 201 points of `[-2, 2]`.
    Three,
}

impl Example {
    pub fn from_number(which: u8) -> Result<Self> {
        match which {
            1 => Ok(Example::One),
            2 => Ok(Example::Two),
            3 => Ok(Example::Three),
            _ => invalid(format!("unknown example {which}; expected 1, 2 or 3")),
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            Example::One => 1,
            Example::Two => 2,
            Example::Three => 3,
        }
    }

    pub fn default_n(&self) -> usize {
        match self {
            Example::One => 200,
            Example::Two | Example::Three => 201,
        }
    }

    /// True median curve at a point of the unit interval.
    pub fn truth(&self, x: f64) -> f64 {
        match self {
            Example::One => normal_pdf(x, 0.15, 0.05) / 4.0 + normal_pdf(x, 0.6, 0.2) / 4.0,
            Example::Two => {
                let t = 4.0 * x - 2.0;
                (2.0 * t).sin() + 2.0 * (-16.0 * t * t).exp()
            }
            Example::Three => {
                let t = 4.0 * x - 2.0;
                t.sin() + 2.0 * (-30.0 * t * t).exp()
            }
        }
    }
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Noise quantile function: `-ln(1 - u)/4 - 0.175`.
pub fn noise_quantile(u: f64) -> f64 {
    -(1.0 - u).ln() / NOISE_RATE + NOISE_SHIFT
}

/// Observations with their true median curve values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub truth: Vec<f64>,
}

pub fn generate_example(which: Example, seed: u64) -> SimulatedData {
    generate_example_with_n(which, which.default_n(), seed)
}

/// Like [`generate_example`] with a custom sample size.
pub fn generate_example_with_n(which: Example, n: usize, seed: u64) -> SimulatedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = match which {
        Example::One => (0..n).map(|_| rng.random::<f64>()).collect(),
        Example::Two | Example::Three => crate::estimate::linspace(0.0, 1.0, n),
    };
    let truth: Vec<f64> = x.iter().map(|&v| which.truth(v)).collect();
    let y = truth.iter().map(|f| f + noise_quantile(rng.random::<f64>())).collect();
    SimulatedData { x, y, truth }
}
