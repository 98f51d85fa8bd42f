//! Simulation studies: AR(1) Gaussian designs, per-replication tuning and
//! scoring of the TISP variants, trimmed-mean summaries with bootstrap
//! standard errors, and bootstrap selection stability.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{normalize_columns, scale_columns, Cholesky, DenseMatrix, DenseVector};
use crate::rng::{self, Stream};
use crate::solver::{solve, Lambda, ScaleMode, SolveOptions, TispProblem};
use crate::thresholds::{ThresholdRule, DEFAULT_SCAD_A};
use crate::tuning::{tune_hybrid, tune_lambda, SearchOptions};

pub const DEFAULT_TRIM: f64 = 0.4;
pub const BOOTSTRAP_SE_RESAMPLES: usize = 500;
/// A cell is marked when more than this fraction of replications failed.
pub const FAILURE_MARK_FRACTION: f64 = 0.1;
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub d: usize,
    /// Run-length coefficient pattern: `(value, count)` pairs expanded in order.
    pub beta_pattern: Vec<(f64, usize)>,
    pub rho: f64,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
}

impl SimSpec {
    /// Train/validation/test 20/100/200, `d = 8`, `β = (3, 1.5, 0, 0, 2, 0, 0, 0)`.
    pub fn example1(sigma: f64, seed: u64) -> Self {
        Self::wide(20, 100, 200, 8, 0.5, sigma, seed)
    }

    /// As [`example1`](Self::example1) with `ρ = 0.85`.
    pub fn example2(sigma: f64, seed: u64) -> Self {
        Self { rho: 0.85, ..Self::example1(sigma, seed) }
    }

    /// `β = (3, 1.5, 0, 0, 2, 0, …, 0)` of length `d`, 50 replications.
    pub fn wide(n_train: usize, n_val: usize, n_test: usize, d: usize, rho: f64, sigma: f64, seed: u64) -> Self {
        Self {
            n_train,
            n_val,
            n_test,
            d,
            beta_pattern: vec![(3.0, 1), (1.5, 1), (0.0, 2), (2.0, 1), (0.0, d.saturating_sub(5))],
            rho,
            sigma,
            reps: 50,
            seed,
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta_pattern.iter().flat_map(|&(v, k)| std::iter::repeat_n(v, k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.beta().len();
        if len != self.d {
            return Err(Error::InvalidArgument(format!("beta pattern expands to {len} entries, expected d = {}", self.d)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("block sizes and d must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive (test error divides by it), got {}", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// `βᵀΣβ/σ²` under the AR(1) population covariance.
    pub fn signal_to_noise(&self) -> f64 {
        let b = self.beta();
        let mut q = 0.0;
        for i in 0..b.len() {
            for j in 0..b.len() {
                q += b[i] * b[j] * self.rho.powi((i as i32 - j as i32).abs());
            }
        }
        q / (self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x_train: DenseMatrix,
    pub y_train: DenseVector,
    pub x_val: DenseMatrix,
    pub y_val: DenseVector,
    pub x_test: DenseMatrix,
    pub y_test: DenseVector,
    /// Coefficients on the generating (unnormalized) scale.
    pub beta_true: DenseVector,
    /// Per-column divisors that normalized the training block (also applied to validation and test).
    pub scale_factors: Vec<f64>,
}

/// `Σᵢⱼ = ρ^|i−j|`.
pub fn ar1_covariance(d: usize, rho: f64) -> DenseMatrix {
    let mut s = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            s.set(i, j, rho.powi((i as i32 - j as i32).abs()));
        }
    }
    s
}

fn draw_block(lower: &DenseMatrix, beta: &[f64], rows: usize, sigma: f64, seed: u64, rep: u64, tag: &str) -> Result<(DenseMatrix, Vec<f64>)> {
    let d = lower.rows();
    let mut design = rng::stream(seed, rep, &format!("design-{tag}"));
    let mut noise = rng::stream(seed, rep, &format!("noise-{tag}"));
    let mut data = Vec::with_capacity(rows * d);
    for _ in 0..rows {
        let z = rng::normal_vec(&mut design, d, 1.0);
        data.extend(lower.matvec(&z));
    }
    let x = DenseMatrix::new(rows, d, data)?;
    let y = x.matvec(beta).into_iter().map(|m| m + sigma * rng::standard_normal(&mut noise)).collect();
    Ok((x, y))
}

/// Draws replication `rep` of `spec`; deterministic in `(spec.seed, rep)`.
/// Training columns are normalized to squared norm `n_train`, and the same
/// divisors are applied to the validation and test blocks.
pub fn gen_dataset(spec: &SimSpec, rep: usize) -> Result<Dataset> {
    if spec.rho >= 1.0 {
        return Err(Error::NotPositiveDefinite { pivot: 1, value: 1.0 - spec.rho * spec.rho });
    }
    let beta = spec.beta();
    if beta.len() != spec.d {
        return Err(Error::InvalidArgument(format!("beta pattern expands to {} entries, expected d = {}", beta.len(), spec.d)));
    }
    let lower = Cholesky::factor(&ar1_covariance(spec.d, spec.rho))?.lower();
    let rep = rep as u64;
    let (xt, yt) = draw_block(&lower, &beta, spec.n_train, spec.sigma, spec.seed, rep, "train")?;
    let (xv, yv) = draw_block(&lower, &beta, spec.n_val, spec.sigma, spec.seed, rep, "val")?;
    let (xs, ys) = draw_block(&lower, &beta, spec.n_test, spec.sigma, spec.seed, rep, "test")?;
    let (x_train, scale_factors) = normalize_columns(&xt, (spec.n_train as f64).sqrt())?;
    Ok(Dataset {
        x_train,
        y_train: DenseVector::new(yt)?,
        x_val: scale_columns(&xv, &scale_factors),
        y_val: DenseVector::new(yv)?,
        x_test: scale_columns(&xs, &scale_factors),
        y_test: DenseVector::new(ys)?,
        beta_true: DenseVector::new(beta)?,
        scale_factors,
    })
}

/// `100·(Σ(ŷᵢ − yᵢ)²/(Nσ²) − 1)`.
pub fn smse(y_hat: &[f64], y_test: &[f64], sigma: f64) -> f64 {
    let rss: f64 = y_hat.iter().zip(y_test).map(|(a, b)| (a - b).powi(2)).sum();
    100.0 * (rss / (y_test.len() as f64 * sigma * sigma) - 1.0)
}

/// Mean after dropping `⌊trim_fraction/2 · k⌋` values from each end.
pub fn trimmed_mean(values: &[f64], trim_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&trim_fraction) {
        return Err(Error::InvalidArgument(format!("trim fraction must lie in [0, 1), got {trim_fraction}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (trim_fraction / 2.0 * v.len() as f64).floor() as usize;
    let kept = &v[cut.min(v.len())..v.len().saturating_sub(cut)];
    if kept.is_empty() {
        return Err(Error::InvalidArgument("no values left after trimming".into()));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityMetrics {
    /// Percentage of coordinates with a wrong sign (sign of 0 is 0).
    pub spar_err: f64,
    /// Percentage of true zeros estimated as zero; `None` if there are none.
    pub prop_z: Option<f64>,
    /// Percentage of true nonzeros estimated as nonzero; `None` if there are none.
    pub prop_nz: Option<f64>,
}

fn sgn(v: f64) -> i8 {
    (v > 0.0) as i8 - (v < 0.0) as i8
}

pub fn sparsity_metrics(beta_hat: &[f64], beta_true: &[f64]) -> Result<SparsityMetrics> {
    if beta_hat.len() != beta_true.len() {
        return Err(Error::Dimension(format!("lengths differ: {} vs {}", beta_hat.len(), beta_true.len())));
    }
    let d = beta_true.len() as f64;
    let wrong = beta_hat.iter().zip(beta_true).filter(|(a, b)| sgn(**a) != sgn(**b)).count();
    let zeros = beta_true.iter().filter(|b| **b == 0.0).count();
    let proper_z = beta_hat.iter().zip(beta_true).filter(|(a, b)| **b == 0.0 && **a == 0.0).count();
    let proper_nz = beta_hat.iter().zip(beta_true).filter(|(a, b)| **b != 0.0 && **a != 0.0).count();
    let nonzeros = beta_true.len() - zeros;
    Ok(SparsityMetrics {
        spar_err: 100.0 * wrong as f64 / d,
        prop_z: (zeros > 0).then(|| 100.0 * proper_z as f64 / zeros as f64),
        prop_nz: (nonzeros > 0).then(|| 100.0 * proper_nz as f64 / nonzeros as f64),
    })
}

/// Estimators compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Lasso,
    Hard,
    Scad { a: f64 },
    Hybrid,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Lasso => "Lasso",
            Method::Hard => "Hard-TISP",
            Method::Scad { .. } => "SCAD-TISP",
            Method::Hybrid => "Hybrid-TISP",
        }
    }

    pub fn all() -> [Method; 4] {
        [Method::Lasso, Method::Hard, Method::Scad { a: DEFAULT_SCAD_A }, Method::Hybrid]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Lasso => write!(f, "lasso"),
            Method::Hard => write!(f, "hard"),
            Method::Scad { a } => write!(f, "scad:{a:?}"),
            Method::Hybrid => write!(f, "hybrid"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "lasso" | "soft" => Ok(Method::Lasso),
            "hard" => Ok(Method::Hard),
            "hybrid" => Ok(Method::Hybrid),
            _ if lower.starts_with("scad") => match lower.parse::<ThresholdRule>()? {
                ThresholdRule::Scad { a } => Ok(Method::Scad { a }),
                _ => unreachable!(),
            },
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?} (lasso, hard, scad[:a], hybrid)"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub smse: Option<f64>,
    pub spar_err: Option<f64>,
    pub prop_z: Option<f64>,
    pub prop_nz: Option<f64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub nonzeros: Option<usize>,
    pub error: Option<String>,
}

/// Tunes `method` on the training/validation blocks and scores it on the test block.
pub fn run_method(data: &Dataset, method: Method, sigma: f64, options: &SearchOptions) -> Result<RepRecord> {
    let rule = match method {
        Method::Lasso => ThresholdRule::Soft,
        Method::Hard => ThresholdRule::Hard,
        Method::Scad { a } => ThresholdRule::scad(a)?,
        Method::Hybrid => ThresholdRule::Hybrid { eta: 0.0 },
    };
    let template = TispProblem::new(data.x_train.clone(), data.y_train.clone(), rule, Lambda::Scalar(0.0), ScaleMode::AutoK0)?;
    let validation = (&data.x_val, data.y_val.as_slice());
    let tuned = match method {
        Method::Hybrid => tune_hybrid(&template, validation, options)?,
        _ => tune_lambda(&template, validation, options)?,
    };
    let beta = tuned.result.beta_hat.as_slice();
    let metrics = sparsity_metrics(beta, &data.beta_true)?;
    Ok(RepRecord {
        rep: 0,
        smse: Some(smse(&data.x_test.matvec(beta), &data.y_test, sigma)),
        spar_err: Some(metrics.spar_err),
        prop_z: metrics.prop_z,
        prop_nz: metrics.prop_nz,
        lambda: Some(tuned.lambda_star),
        eta: tuned.eta_star,
        nonzeros: Some(beta.iter().filter(|b| **b != 0.0).count()),
        error: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cell: String,
    pub method: Method,
    /// Trimmed-mean SMSE.
    pub test_err: Option<f64>,
    /// Bootstrap standard error of the trimmed-mean SMSE.
    pub test_err_se: Option<f64>,
    pub spar_err: Option<f64>,
    pub prop_z: Option<f64>,
    pub prop_nz: Option<f64>,
    pub failed_reps: usize,
    /// More than 10% of replications failed.
    pub marked: bool,
    pub records: Vec<RepRecord>,
}

/// Standard deviation of the trimmed mean over resamples drawn with replacement.
pub fn bootstrap_se(values: &[f64], trim: f64, resamples: usize, stream: &mut Stream) -> Result<f64> {
    if values.is_empty() || resamples < 2 {
        return Err(Error::InvalidArgument("bootstrap needs values and at least two resamples".into()));
    }
    let k = values.len();
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; k];
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = values[rng::index(stream, k)];
        }
        stats.push(trimmed_mean(&buf, trim)?);
    }
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    Ok((stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt())
}

fn trimmed_of(records: &[RepRecord], field: impl Fn(&RepRecord) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = records.iter().filter_map(field).collect();
    trimmed_mean(&v, DEFAULT_TRIM).ok()
}

/// Summarizes per-replication records into one table row.
pub fn summarize(cell: &str, method: Method, records: Vec<RepRecord>, seed: u64) -> Result<MetricsReport> {
    let smses: Vec<f64> = records.iter().filter_map(|r| r.smse).collect();
    let failed_reps = records.iter().filter(|r| r.error.is_some()).count();
    let test_err_se = if smses.is_empty() {
        None
    } else {
        let mut stream = rng::stream(seed, 0, &format!("bootstrap-se/{cell}/{method}"));
        Some(bootstrap_se(&smses, DEFAULT_TRIM, BOOTSTRAP_SE_RESAMPLES, &mut stream)?)
    };
    Ok(MetricsReport {
        cell: cell.to_string(),
        method,
        test_err: trimmed_of(&records, |r| r.smse),
        test_err_se,
        spar_err: trimmed_of(&records, |r| r.spar_err),
        prop_z: trimmed_of(&records, |r| r.prop_z),
        prop_nz: trimmed_of(&records, |r| r.prop_nz),
        failed_reps,
        marked: failed_reps as f64 > FAILURE_MARK_FRACTION * records.len() as f64,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub label: String,
    pub spec: SimSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<MetricsReport>,
}

/// Runs every method on every cell. Replications run in parallel; each draws
/// its data from its own streams, so output does not depend on thread count.
pub fn run_benchmark(cells: &[BenchmarkCell], methods: &[Method], options: &SearchOptions) -> Result<BenchmarkTable> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods given".into()));
    }
    let mut rows = Vec::new();
    for cell in cells {
        cell.spec.validate()?;
        let datasets: Vec<Result<Dataset>> = (0..cell.spec.reps).into_par_iter().map(|r| gen_dataset(&cell.spec, r)).collect();
        for &method in methods {
            let records: Vec<RepRecord> = datasets
                .par_iter()
                .enumerate()
                .map(|(rep, data)| {
                    let outcome = data.as_ref().map_err(|e| Error::Data(e.to_string())).and_then(|d| run_method(d, method, cell.spec.sigma, options));
                    match outcome {
                        Ok(rec) => RepRecord { rep, ..rec },
                        Err(e) => RepRecord {
                            rep,
                            smse: None,
                            spar_err: None,
                            prop_z: None,
                            prop_nz: None,
                            lambda: None,
                            eta: None,
                            nonzeros: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            rows.push(summarize(&cell.label, method, records, cell.spec.seed)?);
        }
    }
    Ok(BenchmarkTable { rows })
}

pub const CSV_HEADER: [&str; 8] = ["cell", "method", "Test-err", "Test-err-SE", "Spar-err", "Prop-Z", "Prop-NZ", "failed"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl BenchmarkTable {
    /// One row per (cell, method), comma separated, LF line endings.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(|e| Error::Data(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.cell.clone(),
                r.method.label().to_string(),
                opt(r.test_err),
                opt(r.test_err_se),
                opt(r.spar_err),
                opt(r.prop_z),
                opt(r.prop_nz),
                r.failed_reps.to_string(),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    /// Fixed-width text layout with one block per cell; methods outside this
    /// crate (one-step SCAD, elastic net) are shown as `------`.
    pub fn render_text(&self) -> String {
        let columns = ["Lasso", "One-step SCAD", "Hard-TISP", "SCAD-TISP", "eNet", "Hybrid-TISP"];
        let mut out = String::new();
        let _ = write!(out, "{:<16}{:<10}", "", "");
        for c in columns {
            let _ = write!(out, "{c:>15}");
        }
        out.push('\n');
        let mut cells: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !cells.contains(&r.cell.as_str()) {
                cells.push(&r.cell);
            }
        }
        for cell in cells {
            let find = |label: &str| self.rows.iter().find(|r| r.cell == cell && r.method.label() == label);
            let lines: [(&str, fn(&MetricsReport) -> String); 4] = [
                ("Test-err", |r| match (r.test_err, r.test_err_se) {
                    (Some(t), Some(se)) => format!("{t:.1}({se:.1})"),
                    (Some(t), None) => format!("{t:.1}"),
                    _ => "NA".into(),
                }),
                ("Spar-err", |r| r.spar_err.map_or("NA".into(), |v| format!("{v:.1}"))),
                ("Prop-Z", |r| r.prop_z.map_or("NA".into(), |v| format!("{v:.1}%"))),
                ("Prop-NZ", |r| r.prop_nz.map_or("NA".into(), |v| format!("{v:.1}%"))),
            ];
            for (k, (name, fmt_fn)) in lines.iter().enumerate() {
                let _ = write!(out, "{:<16}{:<10}", if k == 0 { cell } else { "" }, name);
                for c in columns {
                    let text = find(c).map_or("------".to_string(), |r| {
                        let s = fmt_fn(r);
                        if r.marked && k == 0 { format!("{s}*") } else { s }
                    });
                    let _ = write!(out, "{text:>15}");
                }
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Fraction of resamples in which each variable was nonzero.
    pub proportions: Vec<f64>,
    pub resamples: usize,
    /// Resamples redrawn because a predictor was constant.
    pub redrawn: usize,
    pub nonconverged: usize,
}

/// Centers and scales each column to unit (population) variance; `None` if a column is constant.
fn standardize(x: &DenseMatrix) -> Option<DenseMatrix> {
    let (n, p) = (x.rows(), x.cols());
    let mut out = x.clone();
    for j in 0..p {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 1e-12 * (1.0 + mean.abs())) {
            return None;
        }
        for (i, v) in col.iter().enumerate() {
            out.set(i, j, (v - mean) / sd);
        }
    }
    Some(out)
}

/// Case-resampling bootstrap of the selection made by `rule` at a fixed `λ`.
/// Each resample standardizes the predictors and centers the response.
pub fn bootstrap_stability(
    x: &DenseMatrix,
    y: &[f64],
    rule: ThresholdRule,
    lambda: f64,
    b: usize,
    seed: u64,
    options: SolveOptions,
) -> Result<StabilityReport> {
    let (n, p) = (x.rows(), x.cols());
    if b < 2 {
        return Err(Error::InvalidArgument("bootstrap needs B >= 2".into()));
    }
    if y.len() != n {
        return Err(Error::Dimension(format!("X has {n} rows but y has length {}", y.len())));
    }
    let runs: Vec<Result<(Vec<bool>, usize, bool)>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            for attempt in 0..MAX_REDRAWS {
                let mut stream = rng::stream(seed, rep as u64, &format!("bootstrap-{attempt}"));
                let rows: Vec<usize> = (0..n).map(|_| rng::index(&mut stream, n)).collect();
                let Some(xs) = standardize(&x.select_rows(&rows)) else { continue };
                let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                let mean = ys.iter().sum::<f64>() / n as f64;
                let ys = DenseVector::new(ys.into_iter().map(|v| v - mean).collect())?;
                let problem = TispProblem::new(xs, ys, rule, Lambda::Scalar(lambda), ScaleMode::AutoK0)?;
                let r = solve(&problem, &vec![0.0; p], options.tol, options.max_iter)?;
                return Ok((r.beta_hat.iter().map(|v| *v != 0.0).collect(), attempt, r.converged));
            }
            Err(Error::Data(format!("resample {rep}: every redraw had a constant predictor")))
        })
        .collect();
    let mut counts = vec![0usize; p];
    let mut redrawn = 0;
    let mut nonconverged = 0;
    for run in runs {
        let (nz, attempts, converged) = run?;
        redrawn += attempts;
        nonconverged += usize::from(!converged);
        for (c, z) in counts.iter_mut().zip(nz) {
            *c += usize::from(z);
        }
    }
    Ok(StabilityReport {
        proportions: counts.iter().map(|c| *c as f64 / b as f64).collect(),
        resamples: b,
        redrawn,
        nonconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smse_cases() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(smse(&y, &y, 1.0), -100.0);
        let off: Vec<f64> = y.iter().map(|v| v + 2.0).collect();
        assert_eq!(smse(&off, &y, 2.0), 0.0);
        let off2: Vec<f64> = y.iter().map(|v| v + 2f64.sqrt() * 2.0).collect();
        assert!((smse(&off2, &y, 2.0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn trimmed_mean_cases() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(trimmed_mean(&v, 0.4).unwrap(), 5.5);
        assert_eq!(trimmed_mean(&[1.0, 2.0, 6.0], 0.0).unwrap(), 3.0);
        assert_eq!(trimmed_mean(&[2.5; 7], 0.4).unwrap(), 2.5);
        assert_eq!(trimmed_mean(&[5.0, 1.0, 9.0, 3.0, 100.0], 0.4).unwrap(), (3.0 + 5.0 + 9.0) / 3.0);
        assert!(trimmed_mean(&[], 0.4).is_err());
        assert!(trimmed_mean(&[1.0], 1.0).is_err());
    }

    #[test]
    fn sparsity_cases() {
        let beta = [3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
        let same = sparsity_metrics(&beta, &beta).unwrap();
        assert_eq!((same.spar_err, same.prop_z, same.prop_nz), (0.0, Some(100.0), Some(100.0)));
        let zero = sparsity_metrics(&[0.0; 8], &beta).unwrap();
        assert_eq!((zero.spar_err, zero.prop_z, zero.prop_nz), (37.5, Some(100.0), Some(0.0)));
        let dense = sparsity_metrics(&[1.0; 8], &beta).unwrap();
        assert_eq!((dense.spar_err, dense.prop_z, dense.prop_nz), (62.5, Some(0.0), Some(100.0)));
        let five = sparsity_metrics(&[1.0, -1.0, 0.0, 2.0, 0.0], &[1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((five.spar_err, five.prop_z, five.prop_nz), (40.0, Some(200.0 / 3.0), Some(100.0)));
        assert_eq!(sparsity_metrics(&[0.0], &[0.0]).unwrap().prop_nz, None);
    }

    #[test]
    fn example_snr() {
        assert!((SimSpec::example1(2.0, 0).signal_to_noise() - 5.3125).abs() < 1e-12);
        assert!((SimSpec::example1(3.0, 0).signal_to_noise() - 2.36).abs() < 0.01);
        assert!((SimSpec::example2(2.0, 0).signal_to_noise() - 8.21).abs() < 0.01);
    }

    #[test]
    fn dataset_properties() {
        let spec = SimSpec::example1(2.0, 17);
        let a = gen_dataset(&spec, 3).unwrap();
        let b = gen_dataset(&spec, 3).unwrap();
        assert_eq!(a, b);
        for c in a.x_train.column_norms() {
            assert!((c * c - 20.0).abs() < 1e-9);
        }
        let noiseless = SimSpec { sigma: 0.0, ..spec.clone() };
        let d = gen_dataset(&noiseless, 0).unwrap();
        let scaled_beta: Vec<f64> = d.beta_true.iter().zip(&d.scale_factors).map(|(b, f)| b * f).collect();
        let fit = d.x_train.matvec(&scaled_beta);
        for (f, y) in fit.iter().zip(d.y_train.iter()) {
            assert!((f - y).abs() < 1e-9);
        }
        assert!(SimSpec { rho: 1.0, ..spec.clone() }.validate().is_err());
        assert!(gen_dataset(&SimSpec { rho: 1.0, ..spec }, 0).is_err());
    }

    #[test]
    fn method_strings() {
        for m in Method::all() {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("enet".parse::<Method>().is_err());
    }

    #[test]
    fn bootstrap_noiseless_toy() {
        let spec = SimSpec { sigma: 1e-9, n_train: 40, ..SimSpec::example1(1.0, 5) };
        let d = gen_dataset(&spec, 0).unwrap();
        let report = bootstrap_stability(&d.x_train, &d.y_train, ThresholdRule::Hard, 5.0, 20, 9, SolveOptions::default()).unwrap();
        for i in [0, 1, 4] {
            assert_eq!(report.proportions[i], 1.0);
        }
        let big = bootstrap_stability(&d.x_train, &d.y_train, ThresholdRule::Hard, 1e6, 10, 9, SolveOptions::default()).unwrap();
        assert!(big.proportions.iter().all(|p| *p == 0.0));
    }
}
