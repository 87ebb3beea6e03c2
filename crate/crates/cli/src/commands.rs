use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bqrspline::estimate::{map_index, mse, CurveEstimate};
use bqrspline::experiment::run_benchmark;
use bqrspline::fit::{fit, QuantileFit};
use bqrspline::io::{read_table, write_chain_jsonl, write_curves_csv, Table};
use bqrspline::noncross::{curves_ordered, reweighted_estimate};
use bqrspline::sampler::{AcceptanceStats, KernelCounts, PhaseAcceptance};
use bqrspline::simulate::{generate_example_with_n, Example};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::exit::CliError;

/// Column holding the true curve in simulated data; never a covariate.
const TRUTH_COLUMN: &str = "truth";

type Result<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> bqrspline::Result<()>) -> Result<PathBuf> {
    let output = |message: String| CliError::Output { path: path.to_path_buf(), message };
    let file = File::create(path).map_err(|e| output(e.to_string()))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| output(e.to_string()))?;
    w.flush().map_err(|e| output(e.to_string()))?;
    Ok(path.to_path_buf())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Output { path: cfg.output_dir.clone(), message: e.to_string() })?;
    let echo = cfg.output_dir.join("run.conf");
    write_file(&echo, |w| Ok(w.write_all(cfg.to_file().as_bytes())?))
}

/// Input table with the response and covariates picked out.
struct Dataset {
    path: PathBuf,
    y_name: String,
    y: Vec<f64>,
    x_names: Vec<String>,
    x: Vec<Vec<f64>>,
    truth: Option<Vec<f64>>,
}

fn load_table(cfg: &RunConfig) -> Result<(PathBuf, Table)> {
    let path = cfg.input.clone().ok_or_else(|| CliError::Config("input: a data file is required".into()))?;
    let file = File::open(&path).map_err(|source| CliError::Unreadable { path: path.clone(), source })?;
    match read_table(file) {
        Ok(t) => Ok((path, t)),
        Err(bqrspline::Error::Io(source)) => Err(CliError::Unreadable { path, source }),
        Err(e) => {
            Err(CliError::Malformed { path, message: e.to_string().trim_start_matches("invalid input: ").into() })
        }
    }
}

fn load_dataset(cfg: &RunConfig, additive: bool) -> Result<Dataset> {
    let (path, table) = load_table(cfg)?;
    let malformed = |message: String| CliError::Malformed { path: path.clone(), message };
    let candidates: Vec<usize> = (0..table.names.len()).filter(|&j| table.names[j] != TRUTH_COLUMN).collect();
    let lookup = |name: &str, key: &str| {
        table
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Config(format!("{key}: no column named {name:?}")))
    };
    let y_idx = match &cfg.y_column {
        Some(name) => lookup(name, "y_column")?,
        None => *candidates.last().ok_or_else(|| malformed("no response column".into()))?,
    };
    let x_idx: Vec<usize> = if additive {
        candidates.iter().copied().filter(|&j| j != y_idx).collect()
    } else {
        match &cfg.x_column {
            Some(name) => vec![lookup(name, "x_column")?],
            None => candidates.iter().copied().filter(|&j| j != y_idx).take(1).collect(),
        }
    };
    if x_idx.is_empty() {
        return Err(malformed("needs at least one covariate column besides the response".into()));
    }
    if table.rows() < cfg.degree + 2 {
        return Err(malformed(format!(
            "{} rows; degree {} needs at least {}",
            table.rows(),
            cfg.degree,
            cfg.degree + 2
        )));
    }
    Ok(Dataset {
        path: path.clone(),
        y_name: table.names[y_idx].clone(),
        y: table.columns[y_idx].clone(),
        x_names: x_idx.iter().map(|&j| table.names[j].clone()).collect(),
        x: x_idx.iter().map(|&j| table.columns[j].clone()).collect(),
        truth: table.column(TRUTH_COLUMN).map(<[f64]>::to_vec),
    })
}

#[derive(Serialize)]
struct Rate {
    proposed: u64,
    accepted: u64,
    rate: Option<f64>,
}

impl From<&KernelCounts> for Rate {
    fn from(k: &KernelCounts) -> Self {
        let rate = k.rate();
        Self { proposed: k.proposed, accepted: k.accepted, rate: rate.is_finite().then_some(rate) }
    }
}

fn phase_rates(s: &AcceptanceStats) -> serde_json::Value {
    json!({
        "z_add_delete": Rate::from(&s.z_add_delete),
        "z_swap": Rate::from(&s.z_swap),
        "gamma": Rate::from(&s.gamma),
        "w": Rate::from(&s.w),
        "c": Rate::from(&s.c),
    })
}

fn acceptance(a: &PhaseAcceptance) -> serde_json::Value {
    json!({
        "tuning": phase_rates(&a.tuning),
        "burn_in": phase_rates(&a.burn_in),
        "recorded": phase_rates(&a.recorded),
    })
}

fn chain_summary(fitted: &QuantileFit) -> Result<serde_json::Value> {
    let chain = &fitted.chain;
    let best = map_index(chain)?;
    let mean_knots = chain.samples.iter().map(|s| s.active_count() as f64).sum::<f64>() / chain.len() as f64;
    let mean_c = chain.samples.iter().map(|s| s.c).sum::<f64>() / chain.len() as f64;
    Ok(json!({
        "acceptance": acceptance(&chain.acceptance),
        "map_log_posterior": chain.log_post[best].value(),
        "map_iteration": best,
        "map_knots": fitted.model.knot_locations(&chain.samples[best].z, &chain.samples[best].gamma),
        "mean_active_knots": mean_knots,
        "mean_c": mean_c,
    }))
}

fn level_tag(p: f64) -> String {
    format!("p{p}")
}

/// Chain seeds for several levels, one per level.
fn level_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

fn fit_levels(cfg: &RunConfig, data: &Dataset) -> Result<Vec<QuantileFit>> {
    cfg.quantiles
        .par_iter()
        .enumerate()
        .map(|(i, &p)| Ok(fit(&data.x, &data.y, p, &cfg.fit_config(level_seed(cfg.seed, i)))?))
        .collect()
}

fn fraction_below(y: &[f64], fitted: &[f64]) -> f64 {
    y.iter().zip(fitted).filter(|(y, f)| y < f).count() as f64 / y.len() as f64
}

pub fn fit_single(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_dataset(cfg, false)?;
    let mut written = vec![prepare_output(cfg)?];
    let fits = fit_levels(cfg, &data)?;
    for (i, fitted) in fits.iter().enumerate() {
        let p = fitted.model.p();
        let tag = level_tag(p);
        let grid = fitted.model.default_grid(0);
        let bma = fitted.bma(&grid)?;
        let map = fitted.map(&grid)?;
        written.push(write_file(&cfg.output_dir.join(format!("curve_{tag}.csv")), |w| {
            write_curves_csv(w, &[&bma, &map])
        })?);
        written.push(write_file(&cfg.output_dir.join(format!("chain_{tag}.jsonl")), |w| {
            write_chain_jsonl(w, &fitted.model, &fitted.chain, cfg.write_weights)
        })?);

        let at_x = fitted.bma(&data.x[0])?.values;
        let map_x = fitted.map(&data.x[0])?.values;
        let mse_json = data
            .truth
            .as_ref()
            .map(|t| -> Result<serde_json::Value> { Ok(json!({ "bma": mse(&at_x, t)?, "map": mse(&map_x, t)? })) });
        let summary = json!({
            "command": "fit",
            "input": data.path.display().to_string(),
            "response": data.y_name,
            "covariate": data.x_names[0],
            "n": data.y.len(),
            "p": p,
            "seed": level_seed(cfg.seed, i),
            "chain": chain_summary(fitted)?,
            "skipped_states": bma.skipped_states,
            "fraction_below_bma": fraction_below(&data.y, &at_x),
            "mse": mse_json.transpose()?,
            "config": cfg,
        });
        written.push(write_json(&cfg.output_dir.join(format!("summary_{tag}.json")), &summary)?);
    }
    Ok(written)
}

pub fn fit_additive(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_dataset(cfg, true)?;
    let mut written = vec![prepare_output(cfg)?];
    let fits = fit_levels(cfg, &data)?;
    for (i, fitted) in fits.iter().enumerate() {
        let p = fitted.model.p();
        let tag = level_tag(p);
        let grids: Vec<Vec<f64>> = (0..data.x.len()).map(|j| fitted.model.default_grid(j)).collect();
        let parts = fitted.components(&grids)?;
        for (j, name) in data.x_names.iter().enumerate() {
            let comp = &parts.components[j];
            written.push(write_file(&cfg.output_dir.join(format!("component_{name}_{tag}.csv")), |w| {
                write_curves_csv(w, &[comp])
            })?);
            let residuals = CurveEstimate {
                grid: data.x[j].clone(),
                values: parts.partial_residuals(&fitted.model.data, j),
                ..comp.clone()
            };
            written.push(write_file(&cfg.output_dir.join(format!("partial_residuals_{name}_{tag}.csv")), |w| {
                write_curves_csv(w, &[&residuals])
            })?);
        }
        written.push(write_file(&cfg.output_dir.join(format!("chain_{tag}.jsonl")), |w| {
            write_chain_jsonl(w, &fitted.model, &fitted.chain, cfg.write_weights)
        })?);
        let fitted_values: Vec<f64> = (0..data.y.len()).map(|r| parts.fitted(r)).collect();
        let summary = json!({
            "command": "fit-additive",
            "input": data.path.display().to_string(),
            "response": data.y_name,
            "covariates": data.x_names,
            "n": data.y.len(),
            "p": p,
            "seed": level_seed(cfg.seed, i),
            "intercept": parts.intercept,
            "chain": chain_summary(fitted)?,
            "skipped_states": parts.skipped_states,
            "fraction_below_bma": fraction_below(&data.y, &fitted_values),
            "config": cfg,
        });
        written.push(write_json(&cfg.output_dir.join(format!("summary_{tag}.json")), &summary)?);
    }
    Ok(written)
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let example = Example::from_number(cfg.example)?;
    let n = cfg.n.unwrap_or(example.default_n());
    let sim = generate_example_with_n(example, n, cfg.seed);
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Output { path: cfg.output_dir.clone(), message: e.to_string() })?;
    let path = cfg.output_dir.join(format!("example{}.csv", cfg.example));
    let file = write_file(&path, |w| {
        writeln!(w, "x,y,{TRUTH_COLUMN}")?;
        for i in 0..n {
            writeln!(w, "{},{},{}", sim.x[i], sim.y[i], sim.truth[i])?;
        }
        Ok(())
    })?;
    Ok(vec![file])
}

pub fn benchmark(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let example = Example::from_number(cfg.example)?;
    let n = cfg.n.unwrap_or(example.default_n());
    let mut written = vec![prepare_output(cfg)?];
    let summary = run_benchmark(example, n, cfg.replicates, &cfg.fit_config(cfg.seed), cfg.seed)?;
    let stem = format!("benchmark_example{}", cfg.example);
    written.push(write_file(&cfg.output_dir.join(format!("{stem}.csv")), |w| {
        writeln!(w, "replicate,data_seed,chain_seed,mse_bma,mse_map")?;
        for r in &summary.replicates {
            writeln!(w, "{},{},{},{},{}", r.replicate, r.data_seed, r.chain_seed, r.mse_bma, r.mse_map)?;
        }
        Ok(())
    })?);
    let body = json!({ "command": "benchmark", "summary": summary, "config": cfg });
    written.push(write_json(&cfg.output_dir.join(format!("{stem}.json")), &body)?);
    Ok(written)
}

pub fn noncross(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if cfg.quantiles.len() != 2 {
        return Err(CliError::Config("quantiles: noncross needs exactly two levels p1 < p2".into()));
    }
    let data = load_dataset(cfg, false)?;
    let mut written = vec![prepare_output(cfg)?];
    let fits = fit_levels(cfg, &data)?;
    let (lo, hi) = (&fits[0], &fits[1]);
    // One pass over the pairs: evaluate on the plotting grid followed by
    // the observed covariate values, then split.
    let grid = lo.model.default_grid(0);
    let obs = &data.x[0];
    let mut points = grid.clone();
    points.extend_from_slice(obs);
    let unit = lo.model.to_unit(&[points])?;
    let out = reweighted_estimate(
        &lo.chain,
        &hi.chain,
        cfg.combination,
        &lo.model.data,
        &lo.model.spec,
        &hi.model.spec,
        &[&unit[0]],
    )?;
    let m = grid.len();
    let split = |c: &CurveEstimate| {
        let on_grid = CurveEstimate { grid: grid.clone(), values: c.values[..m].to_vec(), ..c.clone() };
        (on_grid, c.values[m..].to_vec())
    };
    let (curve_lo, obs_lo) = split(&out.curve_lo);
    let (curve_hi, obs_hi) = split(&out.curve_hi);
    let bma_lo = lo.bma(&grid)?;
    let bma_hi = hi.bma(&grid)?;
    written.push(write_file(&cfg.output_dir.join("noncross_curves.csv"), |w| {
        write_curves_csv(w, &[&curve_lo, &curve_hi, &bma_lo, &bma_hi])
    })?);

    let plain_lo = lo.bma(obs)?.values;
    let plain_hi = hi.bma(obs)?.values;
    let crossings = plain_lo.iter().zip(&plain_hi).filter(|(a, b)| a >= b).count();
    let summary = json!({
        "command": "noncross",
        "input": data.path.display().to_string(),
        "p1": lo.model.p(),
        "p2": hi.model.p(),
        "kept": out.kept,
        "total": out.total,
        "kept_fraction": out.kept_fraction(),
        "combination": out.combination,
        "bma_crossings_at_observed_x": crossings,
        "reweighted_ordered_at_observed_x": curves_ordered(&obs_lo, &obs_hi),
        "chains": [chain_summary(lo)?, chain_summary(hi)?],
        "config": cfg,
    });
    written.push(write_json(&cfg.output_dir.join("summary_noncross.json"), &summary)?);
    Ok(written)
}
