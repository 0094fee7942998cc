//! The `tramls` command line: argument parsing, file handling and output
//! documents. All computation is delegated to the library.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tramls::config::RunConfig;
use tramls::data::Response;
use tramls::fit::{fit, FitResult};
use tramls::inference::{predict_curve, CurveRequest, Target};
use tramls::io::{open_data, read_raw_rows};
use tramls::permutation::{score_test, BivariateScoreTest, Resampling, Statistic};
use tramls::select::select;
use tramls::simulate::simulate_dgp;
use tramls::tree::{grow, Tree};
use tramls::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const DEFAULT_GRID_POINTS: usize = 50;
const DEFAULT_B: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "tramls", version, about = "Location-scale transformation models")]
pub struct Cli {
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write the estimates as JSON.
    Fit(Common),
    /// Evaluate a fitted model on a grid and write a CSV table.
    Predict(PredictArgs),
    /// Best subset selection path over location and scale terms.
    Select(SelectArgs),
    /// Grow a transformation tree.
    Tree(TreeArgs),
    /// Permutation score tests of one variable.
    Scoretest(ScoreTestArgs),
    /// Simulate data from the location-scale recovery design.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Run configuration, TOML or JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Output document of `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training CSV, needed with `--newdata`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows of covariate values to predict for.
    #[arg(long)]
    pub newdata: Option<PathBuf>,
    /// cdf, density, survivor, hazard, cumhazard, odds or quantile.
    #[arg(long, default_value = "cdf")]
    pub what: String,
    /// Probabilities for quantiles.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Response values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Stratum label of a stratified fit.
    #[arg(long)]
    pub stratum: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub s_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: u64,
    /// Permutations per variable test; asymptotic p-values when absent.
    #[arg(long = "B")]
    pub b: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreTestArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: u64,
    #[arg(long = "B", default_value_t = DEFAULT_B)]
    pub b: usize,
    /// Variable to test; taken from the configuration when absent.
    #[arg(long)]
    pub variable: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Number of covariates without effect.
    #[arg(long, default_value_t = 0)]
    pub noise: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Output was written but the fit did not converge.
    NotConverged,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidSpec(_) | Error::Json(_) => 2,
        Error::Convergence(_) | Error::NonIdentifiable(_) => 4,
        _ => 3,
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    result: &'a T,
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, command: &str, result: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(
        &mut w,
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command,
            result,
        },
    )?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn status_of(converged: bool) -> Status {
    if converged {
        Status::Ok
    } else {
        Status::NotConverged
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Select(a) => run_select(a),
        Command::Tree(a) => run_tree(a),
        Command::Scoretest(a) => run_scoretest(a),
        Command::Simulate(a) => run_simulate(a),
    }
}

fn run_fit(a: &Common) -> Result<Status> {
    let cfg = load_config(a.config.as_deref())?;
    let (data, spec) = cfg.prepare_path(&a.data)?;
    let res = fit(&data, &spec, &cfg.fit)?;
    write_json(a.out.as_deref(), "fit", &res)?;
    Ok(status_of(res.converged))
}

fn read_fit(path: &Path) -> Result<FitResult> {
    #[derive(serde::Deserialize)]
    struct Doc {
        schema_version: u32,
        command: String,
        result: FitResult,
    }
    let doc: Doc = serde_json::from_reader(open_data(path)?)?;
    if doc.schema_version != SCHEMA_VERSION || doc.command != "fit" {
        return Err(Error::Config(format!(
            "{} is not a version {SCHEMA_VERSION} fit document",
            path.display()
        )));
    }
    Ok(doc.result)
}

fn run_predict(a: &PredictArgs) -> Result<Status> {
    let cfg = load_config(a.config.as_deref())?;
    let fitted = read_fit(&a.fit)?;
    let target: Target = a.what.parse()?;
    let grid = if target == Target::Quantile {
        if !a.p.is_empty() {
            a.p.clone()
        } else if !cfg.predict.grid.is_empty() {
            cfg.predict.grid.clone()
        } else {
            return Err(Error::InvalidArgument("quantiles need probabilities (--p)".into()));
        }
    } else if !a.grid.is_empty() {
        a.grid.clone()
    } else if !cfg.predict.grid.is_empty() {
        cfg.predict.grid.clone()
    } else {
        let (lo, hi) = fitted.spec.basis.support();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument("unbounded support: give --grid".into()));
        }
        let m = cfg.predict.grid_points.unwrap_or(DEFAULT_GRID_POINTS).max(2);
        (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect()
    };
    let stratum = match &a.stratum {
        None => 0,
        Some(s) => fitted
            .strata_levels
            .as_ref()
            .and_then(|l| l.iter().position(|x| x == s))
            .ok_or_else(|| Error::UnknownLevel { level: s.clone() })?,
    };
    let rows: Vec<HashMap<String, f64>> = match &a.newdata {
        Some(path) => {
            let train = a
                .data
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--newdata needs the training data (--data)".into()))?;
            let (train, _) = cfg.prepare_path(train)?;
            read_raw_rows(open_data(path)?)?
                .iter()
                .enumerate()
                .map(|(i, raw)| {
                    cfg.covariate_row(&train, raw)
                        .map(|r| r.into_iter().collect())
                        .map_err(|e| Error::Data {
                            row: Some(i + 1),
                            column: None,
                            message: e.to_string(),
                        })
                })
                .collect::<Result<_>>()?
        }
        None => vec![cfg.predict.at.iter().map(|(k, v)| (k.clone(), *v)).collect()],
    };
    let req = CurveRequest { target, grid, stratum };
    let curves = rows
        .iter()
        .map(|x| predict_curve(&fitted, x, &req))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    w.write_record(["row", "target", "at", "value"])?;
    for (i, curve) in curves.iter().enumerate() {
        for (at, v) in curve.grid.iter().zip(&curve.values) {
            w.write_record([(i + 1).to_string(), a.what.clone(), at.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(Status::Ok)
}

fn run_select(a: &SelectArgs) -> Result<Status> {
    let cfg = load_config(a.common.config.as_deref())?;
    let (data, spec) = cfg.prepare_path(&a.common.data)?;
    let (cand, mut opts) = cfg.select_options(&spec)?;
    if a.s_max.is_some() {
        opts.s_max = a.s_max;
    }
    let path = select(&data, &spec, &cand, &opts)?;
    write_json(a.common.out.as_deref(), "select", &path)?;
    Ok(status_of(path.best().converged))
}

#[derive(Serialize)]
struct TreeReport {
    rendered: String,
    tree: Tree,
}

fn run_tree(a: &TreeArgs) -> Result<Status> {
    let cfg = load_config(a.common.config.as_deref())?;
    let (data, spec) = cfg.prepare_path(&a.common.data)?;
    let tree = grow(&data, &spec, &cfg.tree_options(a.seed, a.b))?;
    let report = TreeReport {
        rendered: tree.render(),
        tree,
    };
    write_json(a.common.out.as_deref(), "tree", &report)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ScoreTestReport {
    variable: String,
    /// Location scores alone: the log-rank test under the cloglog link.
    p_location: f64,
    p_bivariate_quadratic: f64,
    p_bivariate_max: f64,
    test: BivariateScoreTest,
}

fn run_scoretest(a: &ScoreTestArgs) -> Result<Status> {
    let cfg = load_config(a.common.config.as_deref())?;
    let variable = a
        .variable
        .clone()
        .or_else(|| cfg.scoretest.variable.clone())
        .ok_or_else(|| Error::Config("no test variable (--variable or scoretest.variable)".into()))?;
    let (data, spec) = cfg.prepare_path(&a.common.data)?;
    let g = data.variable_design(&variable)?;
    let resampling = Resampling::MonteCarlo { b: a.b, seed: a.seed };
    let test = score_test(&data, &spec, &g, &resampling, &cfg.fit)?;
    let report = ScoreTestReport {
        variable,
        p_location: test.location.p_value(Statistic::Quadratic),
        p_bivariate_quadratic: test.bivariate.p_value(Statistic::Quadratic),
        p_bivariate_max: test.bivariate.p_value(Statistic::Maximum),
        test,
    };
    write_json(a.common.out.as_deref(), "scoretest", &report)?;
    Ok(Status::Ok)
}

fn run_simulate(a: &SimulateArgs) -> Result<Status> {
    let data = simulate_dgp(a.beta, a.gamma, a.n, a.noise, a.seed)?;
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    let mut header = vec!["y".to_string()];
    header.extend(data.columns.iter().cloned());
    w.write_record(&header)?;
    for (i, r) in data.responses.iter().enumerate() {
        let y = match r.value {
            Response::Exact(y) => y,
            Response::Interval { .. } => unreachable!("simulated responses are exact"),
        };
        let mut rec = vec![y.to_string()];
        rec.extend(data.x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(Status::Ok)
}
