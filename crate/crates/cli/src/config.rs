//! Run configuration: built-in defaults, then an optional `key = value` file,
//! then command-line flags.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use bqrspline::basis::BasisKind;
use bqrspline::fit::{FitConfig, KnotPlacement};
use bqrspline::noncross::Combination;
use bqrspline::sampler::SamplerConfig;
use serde::Serialize;

use crate::exit::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BQRSPLINE_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "bqrspline-output";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub quantiles: Vec<f64>,
    pub degree: usize,
    pub basis: BasisKind,
    pub lambda: f64,
    pub max_knots: usize,
    pub placement: KnotPlacement,
    pub exclude_edge_intervals: bool,
    pub n_tune: usize,
    pub n_burn: usize,
    pub n_record: usize,
    pub z_steps_per_gamma: usize,
    pub target_acceptance: f64,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub y_column: Option<String>,
    pub x_column: Option<String>,
    /// Left out of serialized summaries so reruns elsewhere compare equal.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub write_weights: bool,
    pub example: u8,
    pub n: Option<usize>,
    pub replicates: usize,
    pub combination: Combination,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            quantiles: vec![0.5],
            degree: fit.degree,
            basis: fit.basis,
            lambda: fit.lambda,
            max_knots: fit.max_knots,
            placement: fit.placement,
            exclude_edge_intervals: fit.exclude_edge_intervals,
            n_tune: fit.sampler.n_tune,
            n_burn: fit.sampler.n_burn,
            n_record: fit.sampler.n_record,
            z_steps_per_gamma: fit.sampler.z_steps_per_gamma,
            target_acceptance: fit.sampler.target_acceptance,
            seed: fit.sampler.seed,
            input: None,
            y_column: None,
            x_column: None,
            output_dir: std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR)),
            write_weights: false,
            example: 1,
            n: None,
            replicates: 10,
            combination: Combination::Auto,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_basis(value: &str) -> Result<BasisKind, CliError> {
    match value {
        "b-spline" => Ok(BasisKind::BSpline),
        "truncated-power" => Ok(BasisKind::TruncatedPower),
        _ => Err(CliError::Config(format!("basis: expected b-spline or truncated-power, got {value:?}"))),
    }
}

fn basis_name(basis: BasisKind) -> &'static str {
    match basis {
        BasisKind::BSpline => "b-spline",
        BasisKind::TruncatedPower => "truncated-power",
    }
}

pub fn parse_combination(value: &str) -> Result<Combination, CliError> {
    match value {
        "auto" => Ok(Combination::Auto),
        "aligned" => Ok(Combination::Aligned),
        "cartesian" => Ok(Combination::CartesianProduct),
        _ => Err(CliError::Config(format!("combination: expected auto, aligned or cartesian, got {value:?}"))),
    }
}

fn combination_name(c: Combination) -> &'static str {
    match c {
        Combination::Auto => "auto",
        Combination::Aligned => "aligned",
        Combination::CartesianProduct => "cartesian",
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "quantiles" => self.quantiles = parse_list(key, value)?,
            "degree" => self.degree = parse(key, value)?,
            "basis" => self.basis = parse_basis(value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "max_knots" => self.max_knots = parse(key, value)?,
            "n_x" => self.placement = KnotPlacement::EveryNth(parse(key, value)?),
            "equal_intervals" => self.placement = KnotPlacement::EqualWidth(parse(key, value)?),
            "knot_bounds" => self.placement = KnotPlacement::Bounds(parse_list(key, value)?),
            "exclude_edge_intervals" => self.exclude_edge_intervals = parse(key, value)?,
            "n_tune" => self.n_tune = parse(key, value)?,
            "n_burn" => self.n_burn = parse(key, value)?,
            "n_record" => self.n_record = parse(key, value)?,
            "z_steps_per_gamma" => self.z_steps_per_gamma = parse(key, value)?,
            "target_acceptance" => self.target_acceptance = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "y_column" => self.y_column = Some(value.to_string()),
            "x_column" => self.x_column = Some(value.to_string()),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "write_weights" => self.write_weights = parse(key, value)?,
            "example" => self.example = parse(key, value)?,
            "n" => self.n = Some(parse(key, value)?),
            "replicates" => self.replicates = parse(key, value)?,
            "combination" => self.combination = parse_combination(value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| e.context(&format!("line {}", i + 1)))?;
        }
        Ok(())
    }

    /// The configuration as a `key = value` file that [`apply_file`] reads
    /// back to the same value. `output_dir` is left out so an echoed file can
    /// be replayed into a different directory.
    ///
    /// [`apply_file`]: RunConfig::apply_file
    pub fn to_file(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        line("quantiles", join(&self.quantiles));
        line("degree", self.degree.to_string());
        line("basis", basis_name(self.basis).to_string());
        line("lambda", self.lambda.to_string());
        line("max_knots", self.max_knots.to_string());
        match &self.placement {
            KnotPlacement::EveryNth(n) => line("n_x", n.to_string()),
            KnotPlacement::EqualWidth(n) => line("equal_intervals", n.to_string()),
            KnotPlacement::Bounds(b) => line("knot_bounds", join(b)),
        }
        line("exclude_edge_intervals", self.exclude_edge_intervals.to_string());
        line("n_tune", self.n_tune.to_string());
        line("n_burn", self.n_burn.to_string());
        line("n_record", self.n_record.to_string());
        line("z_steps_per_gamma", self.z_steps_per_gamma.to_string());
        line("target_acceptance", self.target_acceptance.to_string());
        line("seed", self.seed.to_string());
        if let Some(p) = &self.input {
            line("input", p.display().to_string());
        }
        if let Some(y) = &self.y_column {
            line("y_column", y.clone());
        }
        if let Some(x) = &self.x_column {
            line("x_column", x.clone());
        }
        line("write_weights", self.write_weights.to_string());
        line("example", self.example.to_string());
        if let Some(n) = self.n {
            line("n", n.to_string());
        }
        line("replicates", self.replicates.to_string());
        line("combination", combination_name(self.combination).to_string());
        out
    }

    /// Quantile levels must be nonempty, inside (0, 1) and strictly increasing.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.quantiles.is_empty() {
            return Err(CliError::Config("quantiles: at least one level is required".into()));
        }
        if let Some(p) = self.quantiles.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(CliError::Config(format!("quantiles: {p} is outside (0, 1)")));
        }
        if self.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("quantiles: levels must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            degree: self.degree,
            basis: self.basis,
            placement: self.placement.clone(),
            exclude_edge_intervals: self.exclude_edge_intervals,
            lambda: self.lambda,
            max_knots: self.max_knots,
            sampler: SamplerConfig {
                n_tune: self.n_tune,
                n_burn: self.n_burn,
                n_record: self.n_record,
                z_steps_per_gamma: self.z_steps_per_gamma,
                seed,
                target_acceptance: self.target_acceptance,
                trace_tuners: false,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply_file("# benchmark settings\nlambda = 5\nmax_knots=15  # more knots\n\nquantiles = 0.25, 0.5,0.75\n")
            .unwrap();
        assert_eq!(c.lambda, 5.0);
        assert_eq!(c.max_knots, 15);
        assert_eq!(c.quantiles, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_file("knot_bounds = 0,0.3,1\nseed = 18446744073709551615\nbasis = truncated-power\ncombination = cartesian\nn = 77\nlambda = 0.1\n").unwrap();
        let mut d = RunConfig { output_dir: c.output_dir.clone(), ..RunConfig::default() };
        d.apply_file(&c.to_file()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn bad_lines_name_the_line() {
        let mut c = RunConfig::default();
        let e = c.apply_file("lambda = 3\nnonsense\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
        assert!(c.apply_file("colour = blue").is_err());
        assert!(c.apply_file("degree = two").is_err());
    }

    #[test]
    fn quantile_levels_are_checked() {
        let mut c = RunConfig::default();
        for bad in ["0.5,0.25", "0,0.5", "0.5,1", "0.3,0.3"] {
            c.set("quantiles", bad).unwrap();
            assert!(c.validate().is_err(), "{bad}");
        }
        c.set("quantiles", "0.1,0.9").unwrap();
        assert!(c.validate().is_ok());
    }
}
