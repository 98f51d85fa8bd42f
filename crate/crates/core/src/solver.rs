//! The TISP fixed-point iteration, its scaled variant, objective and descent
//! diagnostics, solution paths, partial-ridge finishing and the mean-shift
//! outlier procedure.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dot, gram, norm_inf, solve_spd, spectral_norm_default, Cholesky, DenseMatrix, DenseVector, IndexSet,
};
use crate::thresholds::ThresholdRule;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_GRID_POINTS: usize = 100;

const CYCLE_WINDOW: usize = 200;
const DESCENT_SLACK: f64 = 1e-10;

/// Regularization level: one `λ` for all coordinates, or one per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda {
    Scalar(f64),
    PerCoordinate(DenseVector),
}

impl Lambda {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Lambda::Scalar(l) => *l,
            Lambda::PerCoordinate(v) => v[i],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Lambda::Scalar(l) => *l,
            Lambda::PerCoordinate(v) => v.iter().copied().fold(0.0, f64::max),
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            Lambda::Scalar(l) if !(l.is_finite() && *l >= 0.0) => {
                Err(Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {l}")))
            }
            Lambda::PerCoordinate(v) if v.len() != p => {
                Err(Error::Dimension(format!("per-coordinate lambda has length {}, expected {p}", v.len())))
            }
            Lambda::PerCoordinate(v) if v.iter().any(|l| *l < 0.0) => {
                Err(Error::InvalidArgument("per-coordinate lambda entries must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }
}

impl From<f64> for Lambda {
    fn from(l: f64) -> Self {
        Lambda::Scalar(l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "k", rename_all = "snake_case")]
pub enum ScaleMode {
    Unscaled,
    /// Scale by `k₀ = ‖X‖₂`.
    AutoK0,
    Fixed(f64),
}

/// `X` and the derived quantities shared by every problem on the same design.
#[derive(Debug)]
struct Design {
    x: DenseMatrix,
    gram: Option<DenseMatrix>,
}

impl Design {
    fn new(x: DenseMatrix) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Dimension("X must be nonempty".into()));
        }
        let gram = if x.cols() <= 2 * x.rows() { Some(gram(&x)?) } else { None };
        Ok(Self { x, gram })
    }

    fn sigma_times(&self, beta: &[f64]) -> Vec<f64> {
        match &self.gram {
            Some(g) => g.matvec(beta),
            None => self.x.t_matvec(&self.x.matvec(beta)),
        }
    }
}

#[derive(Debug)]
struct Response {
    y: DenseVector,
    xty: Vec<f64>,
}

impl Response {
    fn new(design: &Design, y: DenseVector) -> Result<Self> {
        if design.x.rows() != y.len() {
            return Err(Error::Dimension(format!("X has {} rows but y has length {}", design.x.rows(), y.len())));
        }
        let xty = design.x.t_matvec(&y);
        Ok(Self { y, xty })
    }
}

/// A penalized least-squares problem `½‖Xβ − y‖² + Σ P(βᵢ; λᵢ)` solved by TISP.
#[derive(Debug, Clone)]
pub struct TispProblem {
    design: Arc<Design>,
    response: Arc<Response>,
    rule: ThresholdRule,
    lambda: Lambda,
    scale_mode: ScaleMode,
    k2: f64,
}

impl TispProblem {
    pub fn new(x: DenseMatrix, y: DenseVector, rule: ThresholdRule, lambda: Lambda, scale_mode: ScaleMode) -> Result<Self> {
        let design = Design::new(x)?;
        let response = Arc::new(Response::new(&design, y)?);
        Self::from_parts(Arc::new(design), response, rule, lambda, scale_mode)
    }

    fn from_parts(
        design: Arc<Design>,
        response: Arc<Response>,
        rule: ThresholdRule,
        lambda: Lambda,
        scale_mode: ScaleMode,
    ) -> Result<Self> {
        rule.validate()?;
        lambda.validate(design.x.cols())?;
        let k2 = match scale_mode {
            ScaleMode::Unscaled => 1.0,
            ScaleMode::AutoK0 => {
                let k = spectral_norm_default(&design.x)?;
                if k == 0.0 {
                    return Err(Error::Data("X is identically zero".into()));
                }
                k * k
            }
            ScaleMode::Fixed(k) => {
                if !(k > 0.0 && k.is_finite()) {
                    return Err(Error::InvalidArgument(format!("scale k must be positive, got {k}")));
                }
                k * k
            }
        };
        Ok(Self { design, response, rule, lambda, scale_mode, k2 })
    }

    /// Same data and scaling with a different `λ` (shares `X`, `y` and cached products).
    pub fn with_lambda(&self, lambda: Lambda) -> Result<Self> {
        lambda.validate(self.p())?;
        Ok(Self { lambda, ..self.clone() })
    }

    /// Same design and scaling with a new response (reuses the gram matrix and `k`).
    pub fn with_response(&self, y: DenseVector) -> Result<Self> {
        let response = Arc::new(Response::new(&self.design, y)?);
        Ok(Self { response, ..self.clone() })
    }

    /// Same data and scaling with a different rule.
    pub fn with_rule(&self, rule: ThresholdRule) -> Result<Self> {
        rule.validate()?;
        Ok(Self { rule, ..self.clone() })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.design.x
    }

    pub fn y(&self) -> &DenseVector {
        &self.response.y
    }

    pub fn xty(&self) -> &[f64] {
        &self.response.xty
    }

    pub fn rule(&self) -> ThresholdRule {
        self.rule
    }

    pub fn lambda(&self) -> &Lambda {
        &self.lambda
    }

    pub fn scale_mode(&self) -> ScaleMode {
        self.scale_mode
    }

    pub fn n(&self) -> usize {
        self.design.x.rows()
    }

    pub fn p(&self) -> usize {
        self.design.x.cols()
    }

    /// The scale `k` in use (1 when unscaled).
    pub fn scale(&self) -> f64 {
        self.k2.sqrt()
    }

    /// Rule applied by the scaled iteration.
    pub fn effective_rule(&self) -> ThresholdRule {
        self.rule.scaled(self.k2)
    }

    pub fn effective_lambda(&self, i: usize) -> f64 {
        self.lambda.at(i) / self.k2
    }

    /// `Σβ` with the unscaled gram matrix.
    pub fn sigma_times(&self, beta: &[f64]) -> Vec<f64> {
        self.design.sigma_times(beta)
    }

    /// `max_i |xᵢᵀy|`: every rule with `τ(λ) = λ` returns zero from the zero start at or above it.
    pub fn lambda_max(&self) -> f64 {
        norm_inf(&self.response.xty)
    }

    fn check_len(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::Dimension(format!("beta has length {}, expected {}", beta.len(), self.p())));
        }
        Ok(())
    }
}

/// Objective of the problem actually iterated: with scaling by `k`, this is
/// `½‖Xβ − y‖²/k² + Σ P(βᵢ; λᵢ/k²)` under the scaled rule. Descent
/// guarantees refer to this quantity.
pub fn objective(problem: &TispProblem, beta: &[f64]) -> f64 {
    let rule = problem.effective_rule();
    let loss = residual_sq(problem, beta) / (2.0 * problem.k2);
    let pen: f64 = beta
        .iter()
        .enumerate()
        .map(|(i, b)| rule.penalty(*b, problem.effective_lambda(i)))
        .sum();
    loss + pen
}

/// `½‖Xβ − y‖² + Σ P(βᵢ; λᵢ)` in the original coordinates, ignoring any scaling.
pub fn objective_unscaled(problem: &TispProblem, beta: &[f64]) -> f64 {
    let pen: f64 = beta
        .iter()
        .enumerate()
        .map(|(i, b)| problem.rule.penalty(*b, problem.lambda.at(i)))
        .sum();
    residual_sq(problem, beta) / 2.0 + pen
}

fn residual_sq(problem: &TispProblem, beta: &[f64]) -> f64 {
    let fit = problem.x().matvec(beta);
    fit.iter().zip(problem.y().iter()).map(|(f, y)| (f - y).powi(2)).sum()
}

/// One TISP sweep `Θ((I − Σ/k²)β + Xᵀy/k²; λ/k²)`.
pub fn tisp_step(problem: &TispProblem, beta: &[f64]) -> Vec<f64> {
    let sb = problem.sigma_times(beta);
    step_from_sigma(problem, beta, &sb)
}

fn step_from_sigma(problem: &TispProblem, beta: &[f64], sigma_beta: &[f64]) -> Vec<f64> {
    let rule = problem.effective_rule();
    let k2 = problem.k2;
    beta.iter()
        .zip(sigma_beta)
        .zip(problem.xty())
        .enumerate()
        .map(|(i, ((b, sb), c))| rule.apply(b + (c - sb) / k2, problem.effective_lambda(i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TispResult {
    pub beta_hat: DenseVector,
    pub iterations: usize,
    pub converged: bool,
    /// `‖β⁺ − β‖∞` of the last sweep.
    pub sup_change: f64,
    pub objective: f64,
    /// Objective before the first sweep and after each sweep.
    pub objective_history: Vec<f64>,
    /// `‖β⁺ − β‖₂²` of each sweep.
    pub step_sq_history: Vec<f64>,
    /// Residual of the Θ-equation `Σβ̂ − Xᵀy + τ s̃ = 0`, in scaled coordinates.
    pub theta_residual: f64,
    pub scale: f64,
    pub finished_by_partial_ridge: bool,
    pub cycling_detected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Iterates [`tisp_step`] from `init` until the sup-norm change is at most `tol`.
///
/// Hitting `max_iter` returns the last iterate with `converged = false`,
/// except for the hybrid rule, which then refits the current support by
/// partial ridge regression. Detected cycling returns the best iterate seen.
pub fn solve(problem: &TispProblem, init: &[f64], tol: f64, max_iter: usize) -> Result<TispResult> {
    problem.check_len(init)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial point".into()));
    }
    let mut beta = init.to_vec();
    let mut f = objective(problem, &beta);
    let mut history = vec![f];
    let mut steps = Vec::new();
    let mut changes: Vec<f64> = Vec::new();
    let mut best = (f, beta.clone());
    let mut converged = false;
    let mut cycling = false;
    let mut change = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iter {
        let next = tisp_step(problem, &beta);
        iterations += 1;
        change = 0.0;
        let mut step_sq = 0.0;
        for (a, b) in next.iter().zip(&beta) {
            let d = (a - b).abs();
            change = change.max(d);
            step_sq += d * d;
        }
        beta = next;
        f = objective(problem, &beta);
        history.push(f);
        steps.push(step_sq);
        changes.push(change);
        if f < best.0 {
            best = (f, beta.clone());
        }
        if change <= tol {
            converged = true;
            break;
        }
        if is_cycling(&history, &changes) {
            cycling = true;
            break;
        }
    }

    let mut finished = false;
    if cycling {
        beta = best.1;
        f = best.0;
    } else if !converged {
        if let ThresholdRule::Hybrid { eta } = problem.rule {
            let support = IndexSet::support(&beta);
            if !support.is_empty() {
                if let Ok(refit) = partial_ridge(problem.x(), problem.y(), &support, eta) {
                    let after = tisp_step(problem, &refit);
                    change = after.iter().zip(refit.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    converged = change <= tol;
                    beta = refit.into_vec();
                    f = objective(problem, &beta);
                    history.push(f);
                    finished = true;
                }
            }
        }
    }

    let theta_residual = theta_residual(problem, &beta);
    Ok(TispResult {
        beta_hat: DenseVector::new(beta)?,
        iterations,
        converged,
        sup_change: change,
        objective: f,
        objective_history: history,
        step_sq_history: steps,
        theta_residual,
        scale: problem.scale(),
        finished_by_partial_ridge: finished,
        cycling_detected: cycling,
    })
}

/// Objective flat over the last window while the step size refuses to shrink.
fn is_cycling(history: &[f64], changes: &[f64]) -> bool {
    let w = CYCLE_WINDOW;
    if changes.len() < 2 * w {
        return false;
    }
    let recent = &history[history.len() - w..];
    let (lo, hi) = recent.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let flat = hi - lo <= 1e-12 * (1.0 + hi.abs());
    let c = changes.len();
    let last = changes[c - w / 2..].iter().copied().fold(0.0, f64::max);
    let before = changes[c - w..c - w / 2].iter().copied().fold(0.0, f64::max);
    flat && last >= before
}

/// [`solve`] from each initial point; keeps the lowest objective (first wins ties).
pub fn solve_multistart(problem: &TispProblem, inits: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<TispResult> {
    let mut best: Option<TispResult> = None;
    for init in inits {
        let r = solve(problem, init, tol, max_iter)?;
        if best.as_ref().is_none_or(|b| r.objective < b.objective) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no initial points given".into()))
}

/// Solve from the zero start with default tolerance and iteration cap.
pub fn solve_default(problem: &TispProblem) -> Result<TispResult> {
    solve(problem, &vec![0.0; problem.p()], DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// `‖Σ_kβ − c_k + τ s̃‖∞` with `s̃` chosen in the generalized-sign set of each
/// coordinate to minimize that coordinate (scaled coordinates, `Σ_k = Σ/k²`).
pub fn theta_residual(problem: &TispProblem, beta: &[f64]) -> f64 {
    let rule = problem.effective_rule();
    let sb = problem.sigma_times(beta);
    let k2 = problem.k2;
    let mut worst: f64 = 0.0;
    for i in 0..beta.len() {
        let r = (problem.xty()[i] - sb[i]) / k2;
        let lam = problem.effective_lambda(i);
        let tau = rule.threshold_value(lam);
        let res = if tau == 0.0 {
            r.abs()
        } else if beta[i] == 0.0 {
            (r.abs() - tau).max(0.0)
        } else {
            let g = rule.generalized_sign(beta[i], lam);
            (r - tau * g.clamp(r / tau)).abs()
        };
        worst = worst.max(res);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    /// `None` when the spectral condition could not be evaluated.
    pub condition_holds: Option<bool>,
    /// `μmax(Σ/k²)`.
    pub mu_max: Option<f64>,
    /// `max(1, 2 − h)`.
    pub bound: f64,
    pub monotone: bool,
    pub max_increase: f64,
    /// Smallest `(f_j − f_{j+1}) / ‖β_{j+1} − β_j‖²` over sweeps that moved.
    pub min_decrement_ratio: Option<f64>,
}

/// Checks the objective trace of a solve against the monotone-descent guarantee.
pub fn check_descent(problem: &TispProblem, history: &[f64], step_sq: &[f64]) -> DescentReport {
    let h = (0..problem.p())
        .map(|i| problem.effective_rule().bcc_curvature(problem.effective_lambda(i)))
        .fold(0.0, f64::max);
    let bound = 1f64.max(2.0 - h);
    let mu_max = spectral_norm_default(problem.x()).ok().map(|k| k * k / problem.k2);
    let condition_holds = mu_max.map(|m| m <= bound * (1.0 + 1e-8));
    let mut max_increase: f64 = 0.0;
    let mut ratio: Option<f64> = None;
    for (j, w) in history.windows(2).enumerate() {
        let dec = w[0] - w[1];
        max_increase = max_increase.max(-dec);
        if let Some(&s) = step_sq.get(j) {
            if s > 0.0 {
                let r = dec / s;
                ratio = Some(ratio.map_or(r, |q: f64| q.min(r)));
            }
        }
    }
    DescentReport {
        condition_holds,
        mu_max,
        bound,
        monotone: max_increase <= DESCENT_SLACK,
        max_increase,
        min_decrement_ratio: ratio,
    }
}

/// `n_points` values spaced linearly from `λ_max` down to 0.
pub fn lambda_grid(problem: &TispProblem, n_points: usize) -> Vec<f64> {
    linear_grid(problem.lambda_max(), n_points)
}

pub(crate) fn linear_grid(top: f64, n_points: usize) -> Vec<f64> {
    match n_points {
        0 => Vec::new(),
        1 => vec![top],
        _ => (0..n_points)
            .map(|k| top * (1.0 - k as f64 / (n_points - 1) as f64))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub lambda: f64,
    pub result: Option<TispResult>,
    pub error: Option<String>,
    pub validation_score: Option<f64>,
}

/// Records in the order of the supplied grid (descending for [`lambda_grid`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub records: Vec<PathRecord>,
}

impl SolutionPath {
    /// Record with the smallest validation score; ties go to the larger `λ`.
    pub fn best_by_validation(&self) -> Option<&PathRecord> {
        let mut best: Option<&PathRecord> = None;
        for r in &self.records {
            let Some(s) = r.validation_score else { continue };
            let better = match best {
                None => true,
                Some(b) => {
                    let bs = b.validation_score.unwrap_or(f64::INFINITY);
                    s < bs || (s == bs && r.lambda > b.lambda)
                }
            };
            if better {
                best = Some(r);
            }
        }
        best
    }
}

/// Validation mean squared prediction error of `beta`.
pub fn validation_mse(x_val: &DenseMatrix, y_val: &[f64], beta: &[f64]) -> f64 {
    let fit = x_val.matvec(beta);
    fit.iter().zip(y_val).map(|(f, y)| (f - y).powi(2)).sum::<f64>() / y_val.len().max(1) as f64
}

/// One zero-start solve per grid value; failures are recorded, not propagated.
pub fn solution_path(
    template: &TispProblem,
    grid: &[f64],
    validation: Option<(&DenseMatrix, &[f64])>,
    options: SolveOptions,
) -> Result<SolutionPath> {
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument("lambda grid values must be finite and nonnegative".into()));
    }
    if let Some((xv, yv)) = validation {
        if xv.cols() != template.p() || xv.rows() != yv.len() {
            return Err(Error::Dimension("validation data does not match the training design".into()));
        }
    }
    let zero = vec![0.0; template.p()];
    let records = grid
        .par_iter()
        .map(|&lambda| {
            let outcome = template
                .with_lambda(Lambda::Scalar(lambda))
                .and_then(|p| solve(&p, &zero, options.tol, options.max_iter));
            match outcome {
                Ok(res) => {
                    let validation_score = validation.map(|(xv, yv)| validation_mse(xv, yv, &res.beta_hat));
                    PathRecord { lambda, result: Some(res), error: None, validation_score }
                }
                Err(e) => PathRecord { lambda, result: None, error: Some(e.to_string()), validation_score: None },
            }
        })
        .collect();
    Ok(SolutionPath { records })
}

/// `β_S = (X_SᵀX_S + ηI)⁻¹X_Sᵀy`, zero off the support.
pub fn partial_ridge(x: &DenseMatrix, y: &[f64], support: &IndexSet, eta: f64) -> Result<DenseVector> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("partial ridge needs a nonempty support".into()));
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
    }
    if x.rows() != y.len() {
        return Err(Error::Dimension(format!("X has {} rows but y has length {}", x.rows(), y.len())));
    }
    let xs = x.select_columns(support);
    let mut a = gram(&xs)?;
    a.add_diagonal(eta);
    let coef = solve_spd(&a, &xs.t_matvec(y))?;
    let mut beta = vec![0.0; x.cols()];
    for (k, &i) in support.iter().enumerate() {
        beta[i] = coef[k];
    }
    DenseVector::new(beta)
}

/// Ordinary least squares via the normal equations.
pub fn ols(x: &DenseMatrix, y: &[f64]) -> Result<DenseVector> {
    let all = IndexSet::from_predicate(x.cols(), |_| true);
    partial_ridge(x, y, &all, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierResult {
    pub gamma_hat: DenseVector,
    pub beta_hat: DenseVector,
    pub flags: IndexSet,
    pub iterations: usize,
    pub converged: bool,
}

/// Hat matrix `H = X(XᵀX)⁻¹Xᵀ`.
pub fn hat_matrix(x: &DenseMatrix) -> Result<DenseMatrix> {
    let chol = Cholesky::factor(&gram(x)?)?;
    let n = x.rows();
    // Columns of (XᵀX)⁻¹Xᵀ, one per case.
    let mut h = DenseMatrix::zeros(n, n);
    let proj: Vec<Vec<f64>> = (0..n).map(|j| chol.solve(x.row(j))).collect();
    for i in 0..n {
        for j in i..n {
            let v = dot(x.row(i), &proj[j]);
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    Ok(h)
}

/// Mean-shift outlier detection: iterates `γ⁺ = Θ(Hγ + (I − H)y; λ)` from
/// zero, then refits `β̂ = (XᵀX)⁻¹Xᵀ(y − γ̂)`. Flags are the nonzero shifts.
pub fn outlier_detect(
    x: &DenseMatrix,
    y: &[f64],
    rule: ThresholdRule,
    lambda: &Lambda,
    tol: f64,
    max_iter: usize,
) -> Result<OutlierResult> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension(format!("X has {n} rows but y has length {}", y.len())));
    }
    if n <= x.cols() {
        return Err(Error::Dimension("outlier detection needs more cases than predictors".into()));
    }
    rule.validate()?;
    lambda.validate(n)?;
    let h = hat_matrix(x)?;
    let hy = h.matvec(y);
    let resid: Vec<f64> = y.iter().zip(&hy).map(|(a, b)| a - b).collect();
    let mut gamma = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let hg = h.matvec(&gamma);
        let next: Vec<f64> = (0..n).map(|i| rule.apply(hg[i] + resid[i], lambda.at(i))).collect();
        iterations += 1;
        let change = next.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        gamma = next;
        if change <= tol {
            converged = true;
            break;
        }
    }
    let cleaned: Vec<f64> = y.iter().zip(&gamma).map(|(a, g)| a - g).collect();
    let beta_hat = ols(x, &cleaned)?;
    let flags = IndexSet::support(&gamma);
    Ok(OutlierResult { gamma_hat: DenseVector::new(gamma)?, beta_hat, flags, iterations, converged })
}

/// Per-case levels `c·σ̂·√(1 − hᵢᵢ)`, with `σ̂` the normalized median absolute
/// OLS residual (robust to the shifts being sought).
pub fn outlier_lambda(x: &DenseMatrix, y: &[f64], c: f64) -> Result<Lambda> {
    let h = hat_matrix(x)?;
    let fit = h.matvec(y);
    let mut abs_res: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| (a - b).abs()).collect();
    abs_res.sort_by(f64::total_cmp);
    let m = abs_res.len();
    let median = if m % 2 == 1 { abs_res[m / 2] } else { 0.5 * (abs_res[m / 2 - 1] + abs_res[m / 2]) };
    let sigma = median / 0.674_489_750_196_081_7;
    let levels: Vec<f64> = (0..x.rows()).map(|i| c * sigma * (1.0 - h.get(i, i)).max(0.0).sqrt()).collect();
    Ok(Lambda::PerCoordinate(DenseVector::new(levels)?))
}

/// Per-coordinate levels `λ‖xᵢ‖₂`.
pub fn column_scaled_lambda(x: &DenseMatrix, lambda: f64) -> Result<Lambda> {
    Ok(Lambda::PerCoordinate(DenseVector::new(x.column_norms().into_iter().map(|c| lambda * c).collect())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal_4x3() -> DenseMatrix {
        // Columns of a scaled Hadamard block.
        DenseMatrix::from_rows(&[
            vec![0.5, 0.5, 0.5],
            vec![0.5, -0.5, 0.5],
            vec![0.5, 0.5, -0.5],
            vec![0.5, -0.5, -0.5],
        ])
        .unwrap()
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut s = seed;
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn objective_at_zero() {
        let x = lcg_matrix(6, 3, 1);
        let y = DenseVector::new(vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let p = TispProblem::new(x, y, ThresholdRule::Hard, 1.0.into(), ScaleMode::Unscaled).unwrap();
        assert_eq!(objective(&p, &[0.0; 3]), yy / 2.0);
    }

    #[test]
    fn scalar_step() {
        let x = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        let p = TispProblem::new(x, DenseVector::new(vec![3.0]).unwrap(), ThresholdRule::Soft, 1.0.into(), ScaleMode::Unscaled)
            .unwrap();
        assert_eq!(tisp_step(&p, &[0.0]), vec![2.0]);
    }

    #[test]
    fn step_matches_hand_arithmetic() {
        let x = lcg_matrix(6, 4, 7);
        let y: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let beta = [0.3, -0.2, 0.0, 1.1];
        let p = TispProblem::new(x.clone(), DenseVector::new(y.clone()).unwrap(), ThresholdRule::Scad { a: 3.7 }, 0.4.into(), ScaleMode::Fixed(1.5))
            .unwrap();
        let got = tisp_step(&p, &beta);
        for j in 0..4 {
            let mut xb = [0.0; 6];
            for i in 0..6 {
                for k in 0..4 {
                    xb[i] += x.get(i, k) * beta[k];
                }
            }
            let mut g = 0.0;
            for i in 0..6 {
                g += x.get(i, j) * (y[i] - xb[i]);
            }
            let t = beta[j] + g / 2.25;
            let want = ThresholdRule::Scad { a: 3.7 }.apply(t, 0.4 / 2.25);
            assert!((got[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_collapse() {
        let x = orthonormal_4x3();
        let y = DenseVector::new(vec![2.0, -1.0, 0.3, 4.0]).unwrap();
        let c = x.t_matvec(&y);
        for rule in [ThresholdRule::Soft, ThresholdRule::Hard, ThresholdRule::Scad { a: 3.7 }, ThresholdRule::Hybrid { eta: 0.5 }] {
            let p = TispProblem::new(x.clone(), y.clone(), rule, 1.2.into(), ScaleMode::Unscaled).unwrap();
            let r = solve(&p, &[0.0; 3], 1e-12, 100).unwrap();
            assert!(r.converged && r.iterations <= 2, "{rule}");
            for i in 0..3 {
                assert_eq!(r.beta_hat[i], rule.apply(c[i], 1.2), "{rule}");
            }
        }
    }

    #[test]
    fn above_lambda_max_is_zero() {
        let x = lcg_matrix(10, 5, 3);
        let y = DenseVector::new((0..10).map(|i| (i as f64).sin()).collect()).unwrap();
        for rule in [ThresholdRule::Soft, ThresholdRule::Hard, ThresholdRule::Scad { a: 3.7 }] {
            let p0 = TispProblem::new(x.clone(), y.clone(), rule, 0.0.into(), ScaleMode::AutoK0).unwrap();
            let p = p0.with_lambda(p0.lambda_max().into()).unwrap();
            let r = solve_default(&p).unwrap();
            assert!(r.beta_hat.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn partial_ridge_cases() {
        let x = orthonormal_4x3();
        let y = [1.0, 2.0, 3.0, 4.0];
        let all = IndexSet::from_predicate(3, |_| true);
        let half = partial_ridge(&x, &y, &all, 1.0).unwrap();
        let c = x.t_matvec(&y);
        for i in 0..3 {
            assert!((half[i] - c[i] / 2.0).abs() < 1e-14);
        }
        let collinear = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let both = IndexSet::from_predicate(2, |_| true);
        assert!(partial_ridge(&collinear, &[1.0, 1.0, 1.0], &both, 0.0).is_err());
        assert!(partial_ridge(&x, &y, &IndexSet::from_predicate(3, |_| false), 1.0).is_err());
    }

    #[test]
    fn hybrid_fixed_point_is_partial_ridge() {
        let x = lcg_matrix(30, 5, 11);
        let beta_true = [3.0, 0.0, -2.0, 0.0, 0.0];
        let y = DenseVector::new(x.matvec(&beta_true)).unwrap();
        let eta = 0.3;
        let p = TispProblem::new(x.clone(), y.clone(), ThresholdRule::Hybrid { eta }, 1.0.into(), ScaleMode::AutoK0).unwrap();
        let r = solve_default(&p).unwrap();
        assert!(r.converged);
        let s = IndexSet::support(&r.beta_hat);
        let pr = partial_ridge(&x, &y, &s, eta).unwrap();
        for i in 0..5 {
            assert!((pr[i] - r.beta_hat[i]).abs() < 1e-6);
        }
        assert!(r.theta_residual <= 10.0 * DEFAULT_TOL * (1.0 + norm_inf(p.xty()) / p.scale().powi(2)));
    }

    #[test]
    fn path_endpoints() {
        let x = lcg_matrix(12, 3, 5);
        let y = DenseVector::new((0..12).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
        let p = TispProblem::new(x.clone(), y.clone(), ThresholdRule::Hard, 0.0.into(), ScaleMode::AutoK0).unwrap();
        let path = solution_path(&p, &[p.lambda_max(), 0.0], Some((&x, &y)), SolveOptions::default()).unwrap();
        assert!(path.records[0].result.as_ref().unwrap().beta_hat.iter().all(|b| *b == 0.0));
        let ls = ols(&x, &y).unwrap();
        let last = path.records[1].result.as_ref().unwrap();
        for i in 0..3 {
            assert!((last.beta_hat[i] - ls[i]).abs() < 1e-6);
        }
        assert!(path.best_by_validation().unwrap().lambda == 0.0);
        let grid = lambda_grid(&p, 100);
        assert_eq!(grid.len(), 100);
        assert_eq!(grid[0], p.lambda_max());
        assert_eq!(grid[99], 0.0);
    }

    #[test]
    fn outlier_cases() {
        let x = lcg_matrix(20, 2, 9);
        let beta = [1.5, -0.5];
        let y = x.matvec(&beta);
        let r = outlier_detect(&x, &y, ThresholdRule::Hard, &Lambda::Scalar(0.5), 1e-10, 1000).unwrap();
        assert!(r.flags.is_empty());
        assert!((r.beta_hat[0] - 1.5).abs() < 1e-10 && (r.beta_hat[1] + 0.5).abs() < 1e-10);
        let mut shifted = y.clone();
        shifted[4] += 30.0;
        let r = outlier_detect(&x, &shifted, ThresholdRule::Hard, &Lambda::Scalar(1.0), 1e-10, 10_000).unwrap();
        assert!(r.flags.contains(4));
        let huge = outlier_detect(&x, &shifted, ThresholdRule::Hard, &Lambda::Scalar(1e6), 1e-10, 1000).unwrap();
        let ls = ols(&x, &shifted).unwrap();
        assert!(huge.flags.is_empty());
        assert!((huge.beta_hat[0] - ls[0]).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let x = lcg_matrix(5, 2, 2);
        let y = DenseVector::zeros(4);
        assert!(TispProblem::new(x.clone(), y, ThresholdRule::Soft, 1.0.into(), ScaleMode::Unscaled).is_err());
        let y = DenseVector::zeros(5);
        let bad = Lambda::PerCoordinate(DenseVector::zeros(3));
        assert!(TispProblem::new(x, y, ThresholdRule::Soft, bad, ScaleMode::Unscaled).is_err());
    }
}
