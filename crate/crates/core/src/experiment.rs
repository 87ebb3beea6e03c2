//! Replicated simulation studies on the benchmark examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimate::mse;
use crate::fit::{fit, FitConfig};
use crate::sampler::SamplerConfig;
use crate::simulate::{generate_example_with_n, Example};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub data_seed: u64,
    pub chain_seed: u64,
    pub mse_bma: f64,
    pub mse_map: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub example: u8,
    pub n: usize,
    pub seed: u64,
    pub replicates: Vec<ReplicateResult>,
    pub bma: MeanSd,
    pub map: MeanSd,
}

/// Dataset and chain seeds of every replicate, derived from one seed.
pub fn replicate_seeds(seed: u64, replicates: usize) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..replicates).map(|_| (rng.random(), rng.random())).collect()
}

/// Fits the median curve to `replicates` fresh datasets of `example` and
/// scores BMA and MAP against the true median at the observed points. The
/// sampler seed inside `config` is replaced by the derived chain seeds.
pub fn run_benchmark(
    example: Example,
    n: usize,
    replicates: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<BenchmarkSummary> {
    if replicates == 0 {
        return invalid("replicates must be at least 1");
    }
    let results: Vec<ReplicateResult> = replicate_seeds(seed, replicates)
        .into_par_iter()
        .enumerate()
        .map(|(replicate, (data_seed, chain_seed))| {
            let data = generate_example_with_n(example, n, data_seed);
            let cfg =
                FitConfig { sampler: SamplerConfig { seed: chain_seed, ..config.sampler.clone() }, ..config.clone() };
            let fitted = fit(&[data.x.clone()], &data.y, 0.5, &cfg)?;
            let mse_bma = mse(&fitted.bma(&data.x)?.values, &data.truth)?;
            let mse_map = mse(&fitted.map(&data.x)?.values, &data.truth)?;
            log::info!("example {} replicate {replicate}: bma {mse_bma:.5} map {mse_map:.5}", example.number());
            Ok(ReplicateResult { replicate, data_seed, chain_seed, mse_bma, mse_map })
        })
        .collect::<Result<_>>()?;
    let bma = MeanSd::of(&results.iter().map(|r| r.mse_bma).collect::<Vec<_>>());
    let map = MeanSd::of(&results.iter().map(|r| r.mse_map).collect::<Vec<_>>());
    Ok(BenchmarkSummary { example: example.number(), n, seed, replicates: results, bma, map })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sd() {
        let s = MeanSd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 1.0);
        assert_eq!(MeanSd::of(&[4.0]).sd, 0.0);
    }

    #[test]
    fn seeds_are_distinct_and_reproducible() {
        let a = replicate_seeds(9, 4);
        assert_eq!(a, replicate_seeds(9, 4));
        assert_eq!(a[..2], replicate_seeds(9, 2)[..]);
        assert_ne!(a[0].0, a[1].0);
    }

    #[test]
    fn single_replicate_gives_single_row() {
        let cfg = FitConfig {
            sampler: SamplerConfig { n_tune: 20, n_burn: 20, n_record: 30, ..SamplerConfig::default() },
            ..FitConfig::default()
        };
        let s = run_benchmark(Example::Two, 60, 1, &cfg, 3).unwrap();
        assert_eq!(s.replicates.len(), 1);
        assert_eq!(s.bma.mean, s.replicates[0].mse_bma);
        assert!(run_benchmark(Example::Two, 60, 0, &cfg, 3).is_err());
    }
}
