//! Command-line front end: argument parsing, CSV ingestion and dispatch.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, ErrorClass, Result};
use crate::experiments::{bootstrap_stability, run_benchmark, BenchmarkCell, Method, SimSpec};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::solver::{
    lambda_grid, outlier_detect, outlier_lambda, solution_path, solve, Lambda, ScaleMode, SolveOptions, TispProblem,
    DEFAULT_GRID_POINTS, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::theory::{
    bound_general_selection, bound_hard_family_selection, bound_hybrid_selection, bound_risk, compute_quantities,
    mc_risk, mc_sign_recovery, oracle_report, McConfig, McStarts, SuccessCriterion,
};
use crate::thresholds::ThresholdRule;
use crate::tuning::{loo_cv_score, tune_hybrid, tune_lambda, SearchOptions};

#[derive(Debug, Parser)]
#[command(name = "tisp", version, about = "Thresholding-based iterative selection procedures for sparse regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, env = "TISP_SEED", default_value_t = 0, global = true)]
    pub seed: u64,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    /// Scale by the spectral norm of X.
    Auto,
    None,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model at a fixed λ.
    Solve {
        /// CSV with predictors and the response in the last column.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rule: ThresholdRule,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = ScaleArg::Auto)]
        scale: ScaleArg,
        /// Fixed scale constant k (overrides --scale).
        #[arg(long, conflicts_with = "scale")]
        k: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Zero-start fits over a descending λ grid.
    Path {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rule: ThresholdRule,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        /// Validation CSV (same layout as --data).
        #[arg(long)]
        validation: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Select λ (and η for the hybrid rule) on a validation set, or by
    /// leave-one-out for one-parameter rules when no validation set is given.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rule: ThresholdRule,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run simulation benchmarks.
    Simulate {
        /// JSON experiment file: `{"cells": [{"label", "spec"}], "methods": [...]}`.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, requires = "sigma")]
        preset: Option<Preset>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Methods for presets (lasso, hard, scad[:a], hybrid).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Evaluate a sign-recovery, risk or oracle bound.
    Bounds {
        #[arg(long, value_enum)]
        theorem: Theorem,
        /// Design CSV without a response column (columns with squared norm n).
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Vec<f64>,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Hard-family constant.
        #[arg(long)]
        c: Option<f64>,
        /// Sample size for the orthogonal oracle bound.
        #[arg(long)]
        n: Option<f64>,
    },
    /// Monte Carlo sign-recovery (or risk) on a fixed design.
    McVerify {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Vec<f64>,
        #[arg(long)]
        rule: ThresholdRule,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Criterion::Sign)]
        criterion: Criterion,
        /// Also start from the least-squares fit on the true support and count
        /// a success if either start reaches the right pattern.
        #[arg(long)]
        support_start: bool,
        /// Estimate risk instead of the recovery probability.
        #[arg(long)]
        risk: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Mean-shift outlier detection.
    Outliers {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "hard")]
        rule: ThresholdRule,
        /// Per-case threshold multiplier of the robust residual scale.
        #[arg(long, default_value_t = 3.0, conflicts_with = "lambda")]
        c: f64,
        /// Common λ for every case.
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Case-resampling selection stability at fixed parameters.
    Bootstrap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rule: ThresholdRule,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        b: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Example1,
    Example2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Theorem {
    /// General sandwiched rules.
    #[value(name = "2", alias = "general")]
    General,
    /// Hard-family rules.
    #[value(name = "3", alias = "hard-family")]
    HardFamily,
    /// Risk bounds.
    #[value(name = "4", alias = "risk")]
    Risk,
    /// Orthogonal-design oracle inequality.
    #[value(name = "5", alias = "oracle")]
    Oracle,
    /// Hybrid rule.
    #[value(name = "6", alias = "hybrid")]
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    Sign,
    Support,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub cells: Vec<BenchmarkCell>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
}

fn all_methods() -> Vec<Method> {
    Method::all().to_vec()
}

/// Which column, if any, holds the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseColumn {
    Last,
    None,
}

/// Reads a rectangular numeric CSV. A first row with any non-numeric cell is
/// taken as a header. Errors carry 1-based file row and column numbers.
pub fn ingest_csv(path: &Path, response: ResponseColumn) -> Result<(DenseMatrix, Option<DenseVector>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, path))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(e, path))?;
        let row = k + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if k == 0 && record.iter().any(|c| c.parse::<f64>().is_err()) {
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse { row, col: record.len().min(w) + 1, message: format!("expected {w} fields, found {}", record.len()) });
        }
        let mut values = Vec::with_capacity(w);
        for (j, cell) in record.iter().enumerate() {
            let col = j + 1;
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse { row, col, message: format!("not a number: {cell:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, col, message: format!("non-finite value {cell:?}") });
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse { row: 1, col: 1, message: "no data rows".into() });
    }
    match response {
        ResponseColumn::None => Ok((DenseMatrix::from_rows(&rows)?, None)),
        ResponseColumn::Last => {
            if rows[0].len() < 2 {
                return Err(Error::Parse { row: 1, col: 1, message: "need at least one predictor and a response".into() });
            }
            let y: Vec<f64> = rows.iter_mut().map(|r| r.pop().unwrap_or(f64::NAN)).collect();
            Ok((DenseMatrix::from_rows(&rows)?, Some(DenseVector::new(y)?)))
        }
    }
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Data(format!("{}: {e}", path.display())),
    }
}

fn load_xy(path: &Path) -> Result<(DenseMatrix, DenseVector)> {
    let (x, y) = ingest_csv(path, ResponseColumn::Last)?;
    Ok((x, y.expect("response requested")))
}

/// A finished report: the JSON document plus, when the command has a tabular
/// form, its CSV rendering.
pub struct Report {
    pub json: Value,
    pub csv: Option<String>,
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn num_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn beta_csv(beta: &[f64]) -> Result<String> {
    csv_table(&["index", "beta"], beta.iter().enumerate().map(|(i, b)| vec![i.to_string(), num(*b)]))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("--{name} must be positive, got {v}")))
    }
}

/// Runs one parsed command and builds its report.
pub fn dispatch(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Solve { data, rule, lambda, scale, k, solver } => {
            let (x, y) = load_xy(data)?;
            let mode = match (k, scale) {
                (Some(k), _) => ScaleMode::Fixed(*k),
                (None, ScaleArg::Auto) => ScaleMode::AutoK0,
                (None, ScaleArg::None) => ScaleMode::Unscaled,
            };
            let p = x.cols();
            let problem = TispProblem::new(x, y, *rule, Lambda::Scalar(*lambda), mode)?;
            let r = solve(&problem, &vec![0.0; p], solver.tol, solver.max_iter)?;
            Ok(Report { csv: Some(beta_csv(&r.beta_hat)?), json: to_value(&r)? })
        }
        Command::Path { data, rule, points, validation, solver } => {
            let (x, y) = load_xy(data)?;
            let val = validation.as_deref().map(load_xy).transpose()?;
            let template = TispProblem::new(x, y, *rule, Lambda::Scalar(0.0), ScaleMode::AutoK0)?;
            let grid = lambda_grid(&template, *points);
            let path = solution_path(&template, &grid, val.as_ref().map(|(a, b)| (a, b.as_slice())), solver.options())?;
            let rows = path.records.iter().map(|r| {
                vec![
                    num(r.lambda),
                    r.result.as_ref().map(|s| s.beta_hat.iter().filter(|b| **b != 0.0).count().to_string()).unwrap_or_default(),
                    num_opt(r.result.as_ref().map(|s| s.objective)),
                    num_opt(r.validation_score),
                    r.result.as_ref().map(|s| s.converged.to_string()).unwrap_or_else(|| "failed".into()),
                ]
            });
            let csv = csv_table(&["lambda", "nonzeros", "objective", "validation_mse", "converged"], rows)?;
            Ok(Report { csv: Some(csv), json: to_value(&path)? })
        }
        Command::Tune { data, rule, validation, points, solver } => {
            let (x, y) = load_xy(data)?;
            let options = SearchOptions { lambda_points: *points, solve: solver.options(), ..SearchOptions::default() };
            let hybrid = matches!(rule, ThresholdRule::Hybrid { .. });
            match validation {
                Some(vpath) => {
                    let (xv, yv) = load_xy(vpath)?;
                    let template = TispProblem::new(x, y, *rule, Lambda::Scalar(0.0), ScaleMode::AutoK0)?;
                    let tuned = if hybrid {
                        tune_hybrid(&template, (&xv, &yv), &options)?
                    } else {
                        tune_lambda(&template, (&xv, &yv), &options)?
                    };
                    let csv = beta_csv(&tuned.result.beta_hat)?;
                    Ok(Report { csv: Some(csv), json: to_value(&tuned)? })
                }
                None if hybrid => Err(Error::InvalidArgument("tuning the hybrid rule needs --validation".into())),
                None => {
                    let template = TispProblem::new(x.clone(), y.clone(), *rule, Lambda::Scalar(0.0), ScaleMode::AutoK0)?;
                    let grid = lambda_grid(&template, *points);
                    let scores: Vec<(f64, Result<f64>)> =
                        grid.iter().map(|&l| (l, loo_cv_score(&x, &y, *rule, l, solver.options()).map(|s| s.score))).collect();
                    let mut best: Option<(f64, f64)> = None;
                    for (l, s) in &scores {
                        if let Ok(s) = s {
                            if best.is_none_or(|(bl, bs)| *s < bs || (*s == bs && *l > bl)) {
                                best = Some((*l, *s));
                            }
                        }
                    }
                    let (lambda_star, score) = best.ok_or_else(|| Error::AllFailed("every leave-one-out score failed".into()))?;
                    let fit = solve(&template.with_lambda(Lambda::Scalar(lambda_star))?, &vec![0.0; x.cols()], solver.tol, solver.max_iter)?;
                    let json = json!({
                        "lambda_star": lambda_star,
                        "loo_error": score,
                        "result": fit,
                        "candidates": scores.iter().map(|(l, s)| json!({"lambda": l, "loo_error": s.as_ref().ok()})).collect::<Vec<_>>(),
                    });
                    Ok(Report { csv: Some(beta_csv(&fit.beta_hat)?), json })
                }
            }
        }
        Command::Simulate { spec, preset, sigma, reps, methods } => {
            let mut file = match (spec, preset) {
                (Some(path), None) => serde_json::from_str::<ExperimentFile>(&fs::read_to_string(path)?)?,
                (None, Some(preset)) => {
                    let sigma = sigma.expect("clap enforces --sigma");
                    let (label, spec) = match preset {
                        Preset::Example1 => ("example1", SimSpec::example1(sigma, cli.seed)),
                        Preset::Example2 => ("example2", SimSpec::example2(sigma, cli.seed)),
                    };
                    ExperimentFile { cells: vec![BenchmarkCell { label: format!("{label} sigma={sigma}"), spec }], methods: all_methods() }
                }
                _ => return Err(Error::InvalidArgument("give exactly one of --spec or --preset".into())),
            };
            if let Some(m) = methods {
                file.methods = m.clone();
            }
            if let Some(r) = reps {
                file.cells.iter_mut().for_each(|c| c.spec.reps = *r);
            }
            let table = run_benchmark(&file.cells, &file.methods, &SearchOptions::default())?;
            Ok(Report { csv: Some(table.to_csv()?), json: to_value(&table)? })
        }
        Command::Bounds { theorem, design, beta, sigma, tau, lambda, eta, c, n } => {
            let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Error::InvalidArgument(format!("--{name} is required for this theorem")));
            if *theorem == Theorem::Oracle {
                let report = oracle_report(beta, *sigma, need("n", *n)?);
                return Ok(Report { csv: None, json: to_value(&report)? });
            }
            let design = design.as_deref().ok_or_else(|| Error::InvalidArgument("--design is required for this theorem".into()))?;
            let (x, _) = ingest_csv(design, ResponseColumn::None)?;
            let q = compute_quantities(&x, beta, *eta)?;
            let json = match theorem {
                Theorem::General => to_value(&bound_general_selection(&q, need("tau", *tau)?, *sigma, q.min_abs_beta_nz))?,
                Theorem::HardFamily => {
                    to_value(&bound_hard_family_selection(&q, need("tau", *tau)?, *sigma, need("c", *c)?, q.min_abs_beta_nz))?
                }
                Theorem::Risk => to_value(&bound_risk(&q, need("tau", *tau)?, *sigma))?,
                Theorem::Hybrid => {
                    to_value(&bound_hybrid_selection(&q, need("lambda", *lambda)?, need("eta", *eta)?, *sigma, q.norm_beta_nz))?
                }
                Theorem::Oracle => unreachable!(),
            };
            Ok(Report { csv: None, json: json!({ "quantities": q, "bound": json }) })
        }
        Command::McVerify { design, beta, rule, lambda, sigma, reps, criterion, support_start, risk, solver } => {
            require_positive("sigma", *sigma)?;
            let (x, _) = ingest_csv(design, ResponseColumn::None)?;
            let mut config = McConfig::new(x, DenseVector::new(beta.clone())?, *rule, *lambda, *sigma, *reps, cli.seed);
            config.criterion = match criterion {
                Criterion::Sign => SuccessCriterion::SignPattern,
                Criterion::Support => SuccessCriterion::SupportPattern,
            };
            config.solve = solver.options();
            if *support_start {
                config.starts = McStarts::ZeroAndSupport;
            }
            let json = if *risk { to_value(&mc_risk(&config)?)? } else { to_value(&mc_sign_recovery(&config)?)? };
            Ok(Report { csv: None, json })
        }
        Command::Outliers { data, rule, c, lambda, solver } => {
            let (x, y) = load_xy(data)?;
            let levels = match lambda {
                Some(l) => Lambda::Scalar(*l),
                None => outlier_lambda(&x, &y, *c)?,
            };
            let r = outlier_detect(&x, &y, *rule, &levels, solver.tol, solver.max_iter)?;
            let rows = r.gamma_hat.iter().enumerate().map(|(i, g)| vec![i.to_string(), num(*g), (*g != 0.0).to_string()]);
            Ok(Report { csv: Some(csv_table(&["case", "gamma", "flagged"], rows)?), json: to_value(&r)? })
        }
        Command::Bootstrap { data, rule, lambda, b, solver } => {
            let (x, y) = load_xy(data)?;
            let r = bootstrap_stability(&x, &y, *rule, *lambda, *b, cli.seed, solver.options())?;
            let rows = r.proportions.iter().enumerate().map(|(i, p)| vec![i.to_string(), num(*p)]);
            Ok(Report { csv: Some(csv_table(&["variable", "proportion_nonzero"], rows)?), json: to_value(&r)? })
        }
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn error_object(kind: &str, class: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "class": class, "message": message } }).to_string()
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
    }
}

fn render(cli: &Cli, report: &Report) -> Result<String> {
    match cli.format {
        Format::Json => Ok(serde_json::to_string_pretty(&report.json)? + "\n"),
        Format::Csv => report
            .csv
            .clone()
            .ok_or_else(|| Error::InvalidArgument("this command has no CSV form; use --format json".into())),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let report = pool.install(|| dispatch(cli))?;
    let text = render(cli, &report)?;
    match &cli.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures print a JSON error object on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", error_object("usage", "config", e.to_string().trim()));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_object(e.kind(), class_name(e.class()), &e.to_string()));
            exit_code(e.class())
        }
    }
}
