//! Bayesian quantile regression with free-knot splines.
//!
//! The asymmetric Laplace working likelihood is written as a scale mixture
//! of normals so that the regression coefficients and the scale can be
//! integrated out under a g-prior. What remains, knot indicators and
//! locations, mixing weights and the g-prior scale, is sampled by
//! Metropolis-Hastings within Gibbs with self-tuning random-walk proposals.
//!
//! ```
//! use bqrspline::fit::{fit, FitConfig};
//! use bqrspline::sampler::SamplerConfig;
//! use bqrspline::simulate::{generate_example, Example};
//!
//! let data = generate_example(Example::Two, 7);
//! let config = FitConfig {
//!     sampler: SamplerConfig { n_tune: 50, n_burn: 50, n_record: 100, ..SamplerConfig::default() },
//!     ..FitConfig::default()
//! };
//! let fitted = fit(&[data.x.clone()], &data.y, 0.5, &config).unwrap();
//! let curve = fitted.bma(&data.x).unwrap();
//! assert_eq!(curve.values.len(), data.x.len());
//! ```

pub mod basis;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod fit;
pub mod io;
pub mod noncross;
pub mod posterior;
pub mod sampler;
pub mod simulate;
pub mod tuning;

pub use error::{Error, Result};
