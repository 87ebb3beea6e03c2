mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::exit::CliError;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  sampler or numerical failure
  2  command-line usage error
  3  input file cannot be read
  4  input file is malformed
  5  invalid configuration value
  6  no recorded pair satisfies the non-crossing constraint
  7  output cannot be written";

/// Bayesian quantile regression with free-knot splines.
#[derive(Parser)]
#[command(name = "bqrspline", version, after_help = EXIT_CODES)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// `key = value` file applied before command-line flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory. Defaults to $BQRSPLINE_OUTPUT_DIR, then ./bqrspline-output.
    #[arg(short, long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Chain seed (data seed for simulate and benchmark).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one quantile curve per level to a single covariate.
    Fit(DataArgs),
    /// Fit an additive model over every non-response column.
    FitAdditive(DataArgs),
    /// Write one of the simulated benchmark data sets.
    Simulate(ExampleArgs),
    /// Repeat fits on fresh simulated data and report mean squared errors.
    Benchmark {
        #[command(flatten)]
        example: ExampleArgs,
        #[arg(long)]
        replicates: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Fit two levels and reweight their chains so the curves do not cross.
    Noncross {
        #[command(flatten)]
        data: DataArgs,
        /// auto, aligned or cartesian.
        #[arg(long)]
        combination: Option<String>,
    },
}

#[derive(Args)]
struct ExampleArgs {
    /// Simulated example number.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    example: Option<u8>,
    /// Sample size; the example's own size when omitted.
    #[arg(short, long)]
    n: Option<usize>,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    input: Option<PathBuf>,
    /// Response column; defaults to the last column.
    #[arg(short = 'y', long)]
    y_column: Option<String>,
    /// Covariate column for single-covariate fits.
    #[arg(short = 'x', long)]
    x_column: Option<String>,
    /// Quantile levels, comma separated.
    #[arg(short = 'p', long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    /// Include latent weights in the chain records.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    write_weights: Option<bool>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    degree: Option<usize>,
    /// b-spline or truncated-power.
    #[arg(long)]
    basis: Option<String>,
    /// Poisson mean of the knot count prior.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_knots: Option<usize>,
    /// Candidate interval bounds at every n-th sorted covariate value.
    #[arg(long)]
    n_x: Option<usize>,
    /// That many equal-width candidate intervals.
    #[arg(long)]
    equal_intervals: Option<usize>,
    /// Explicit candidate interval bounds, comma separated.
    #[arg(long, value_delimiter = ',')]
    knot_bounds: Option<Vec<f64>>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    exclude_edge_intervals: Option<bool>,
    #[arg(long)]
    n_tune: Option<usize>,
    #[arg(long)]
    n_burn: Option<usize>,
    #[arg(long)]
    n_record: Option<usize>,
    #[arg(long)]
    z_steps_per_gamma: Option<usize>,
    #[arg(long)]
    target_acceptance: Option<f64>,
}

/// Collects flag overrides as `key = value` pairs so flags and the config
/// file go through the same parser.
#[derive(Default)]
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn put(&mut self, key: &'static str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.0.push((key, v.to_string()));
        }
    }

    fn list(&mut self, key: &'static str, values: Option<Vec<f64>>) {
        if let Some(v) = values {
            self.0.push((key, v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")));
        }
    }

    fn model(&mut self, m: ModelArgs) {
        self.put("degree", m.degree);
        self.put("basis", m.basis);
        self.put("lambda", m.lambda);
        self.put("max_knots", m.max_knots);
        self.put("n_x", m.n_x);
        self.put("equal_intervals", m.equal_intervals);
        self.list("knot_bounds", m.knot_bounds);
        self.put("exclude_edge_intervals", m.exclude_edge_intervals);
        self.put("n_tune", m.n_tune);
        self.put("n_burn", m.n_burn);
        self.put("n_record", m.n_record);
        self.put("z_steps_per_gamma", m.z_steps_per_gamma);
        self.put("target_acceptance", m.target_acceptance);
    }

    fn data(&mut self, d: DataArgs) {
        self.put("input", d.input.map(|p| p.display().to_string()));
        self.put("y_column", d.y_column);
        self.put("x_column", d.x_column);
        self.list("quantiles", d.quantiles);
        self.put("write_weights", d.write_weights);
        self.model(d.model);
    }

    fn example(&mut self, e: ExampleArgs) {
        self.put("example", e.example);
        self.put("n", e.n);
    }
}

type Runner = fn(&RunConfig) -> Result<Vec<PathBuf>, CliError>;

fn configure(cli: Cli) -> Result<(RunConfig, Runner), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::Unreadable { path: path.clone(), source })?;
        cfg.apply_file(&text)?;
    }
    let mut o = Overrides::default();
    o.put("output_dir", cli.output_dir.map(|p| p.display().to_string()));
    o.put("seed", cli.seed);
    let run: Runner = match cli.command {
        Command::Fit(d) => {
            o.data(d);
            commands::fit_single
        }
        Command::FitAdditive(d) => {
            o.data(d);
            commands::fit_additive
        }
        Command::Simulate(e) => {
            o.example(e);
            commands::simulate
        }
        Command::Benchmark { example, replicates, model } => {
            o.example(example);
            o.put("replicates", replicates);
            o.model(model);
            commands::benchmark
        }
        Command::Noncross { data, combination } => {
            o.data(data);
            o.put("combination", combination);
            commands::noncross
        }
    };
    for (key, value) in &o.0 {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok((cfg, run))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let started = Instant::now();
    let outcome = configure(cli).and_then(|(cfg, run)| run(&cfg));
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            log::info!("finished in {:.2?}", started.elapsed());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
