//! Choice of regularization parameters: validation-scored λ paths, the
//! one-dimensional (λ, η) search for the hybrid rule, the ridge reference
//! `η^(r)`, the OLS scale estimate and leave-one-out cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, Cholesky, DenseMatrix, DenseVector, IndexSet};
use crate::solver::{
    lambda_grid, ols, solution_path, solve, validation_mse, Lambda, ScaleMode, SolveOptions, TispProblem, TispResult,
};
use crate::thresholds::ThresholdRule;

pub const DEFAULT_ETA_POINTS: usize = 30;
pub const DEFAULT_RIDGE_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `n/p > 10` and `σ̂ < 5`: one λ-path at `0.05η^(r)`.
    LargeNSmallNoise,
    /// λ-path at `0.5η^(r)`, then an η-path at the best λ.
    AlternatingSearch,
    /// λ-paths at `0.5η^(r)` and `0.05η^(r)`.
    TwoLambdaPaths,
    /// `p ≥ n`: the alternating search plus a λ-path at `0.05η^(r)`.
    LargeP,
}

/// One leg of a search. η values are multiples of the ridge reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Leg {
    LambdaPath { eta_factor: f64 },
    /// η-path with λ fixed at the best λ found by leg `lambda_from`.
    EtaPath { lambda_from: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub branch: Branch,
    /// `η^(r)`; filled in by [`execute_search`] when absent.
    pub eta_reference: Option<f64>,
    pub legs: Vec<Leg>,
}

/// Picks the search branch from the sample size, dimension and OLS scale
/// estimate (`None` when unavailable, treated as large). Ties at `n/p = 5`,
/// `n/p = 10` and `σ̂ = 5` go to the branch that searches more.
pub fn plan_search(n: usize, p: usize, sigma_hat: Option<f64>) -> SearchPlan {
    let alternating = vec![Leg::LambdaPath { eta_factor: 0.5 }, Leg::EtaPath { lambda_from: 0 }];
    if p >= n {
        let mut legs = alternating;
        legs.push(Leg::LambdaPath { eta_factor: 0.05 });
        return SearchPlan { branch: Branch::LargeP, eta_reference: None, legs };
    }
    let ratio = n as f64 / p as f64;
    let sigma = sigma_hat.unwrap_or(f64::INFINITY);
    let (branch, legs) = if ratio <= 5.0 || (ratio <= 10.0 && sigma >= 5.0) {
        (Branch::AlternatingSearch, alternating)
    } else if ratio > 10.0 && sigma < 5.0 {
        (Branch::LargeNSmallNoise, vec![Leg::LambdaPath { eta_factor: 0.05 }])
    } else {
        (
            Branch::TwoLambdaPaths,
            vec![Leg::LambdaPath { eta_factor: 0.5 }, Leg::LambdaPath { eta_factor: 0.05 }],
        )
    };
    SearchPlan { branch, eta_reference: None, legs }
}

/// `√(‖y − Xβ_OLS‖² / (n − p))`.
pub fn ols_sigma_hat(x: &DenseMatrix, y: &[f64]) -> Result<f64> {
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::Dimension(format!("OLS scale needs n > p, got n = {n}, p = {p}")));
    }
    let beta = ols(x, y)?;
    let fit = x.matvec(&beta);
    let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((rss / (n - p) as f64).sqrt())
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// η-path grid around the ridge reference: `[η^(r)/100, 10η^(r)]`.
pub fn eta_grid(eta_reference: f64, count: usize) -> Vec<f64> {
    log_grid(eta_reference / 100.0, 10.0 * eta_reference, count)
}

/// Ridge η candidates `[10⁻⁴s, 10³s]`, `s` the mean squared column norm.
pub fn default_ridge_grid(x: &DenseMatrix, count: usize) -> Vec<f64> {
    let s = x.column_norms().iter().map(|c| c * c).sum::<f64>() / x.cols() as f64;
    let s = if s > 0.0 { s } else { 1.0 };
    log_grid(1e-4 * s, 1e3 * s, count)
}

/// `(XᵀX + ηI)⁻¹Xᵀy`, through the `n × n` dual system when `p > n`.
pub fn ridge_solve(x: &DenseMatrix, y: &[f64], eta: f64) -> Result<DenseVector> {
    if x.cols() <= x.rows() {
        let all = IndexSet::from_predicate(x.cols(), |_| true);
        crate::solver::partial_ridge(x, y, &all, eta)
    } else {
        let mut k = gram(&x.transpose())?;
        k.add_diagonal(eta);
        let alpha = Cholesky::factor(&k)?.solve(y);
        DenseVector::new(x.t_matvec(&alpha))
    }
}

/// Leave-one-out mean squared error of ridge regression, via the hat-matrix identity
/// `eᵢ/(1 − Hᵢᵢ)`.
pub fn ridge_loo(x: &DenseMatrix, y: &[f64], eta: f64) -> Result<f64> {
    let n = x.rows();
    // H = X(XᵀX + ηI)⁻¹Xᵀ = K(K + ηI)⁻¹ with K = XXᵀ.
    let kmat = gram(&x.transpose())?;
    let mut shifted = kmat.clone();
    shifted.add_diagonal(eta);
    let chol = Cholesky::factor(&shifted)?;
    let alpha = chol.solve(y);
    let fit = kmat.matvec(&alpha);
    let mut total = 0.0;
    for i in 0..n {
        // Hᵢᵢ = 1 − η[(K + ηI)⁻¹]ᵢᵢ.
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let inv_ii = chol.solve(&e)[i];
        let leverage = 1.0 - eta * inv_ii;
        if leverage >= 1.0 - 1e-12 {
            return Err(Error::Data(format!("case {i} has leverage 1 under ridge eta = {eta}")));
        }
        total += ((y[i] - fit[i]) / (1.0 - leverage)).powi(2);
    }
    Ok(total / n as f64)
}

pub enum RidgeScoring<'a> {
    Validation(&'a DenseMatrix, &'a [f64]),
    LeaveOneOut,
}

/// The ridge tuning parameter minimizing validation (or LOO) error; ties go to the larger η.
pub fn ridge_reference(x: &DenseMatrix, y: &[f64], scoring: &RidgeScoring<'_>, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument("ridge grid must be nonempty and strictly positive".into()));
    }
    let scores: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&eta| match scoring {
            RidgeScoring::Validation(xv, yv) => ridge_solve(x, y, eta).map(|b| validation_mse(xv, yv, &b)),
            RidgeScoring::LeaveOneOut => ridge_loo(x, y, eta),
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (&eta, score) in grid.iter().zip(scores) {
        let Ok(s) = score else { continue };
        let better = match best {
            None => true,
            Some((bs, be)) => s < bs || (s == bs && eta > be),
        };
        if better {
            best = Some((s, eta));
        }
    }
    best.map(|(_, eta)| eta)
        .ok_or_else(|| Error::AllFailed("every ridge fit failed".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lambda: f64,
    pub eta: Option<f64>,
    pub validation_error: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegRecord {
    pub leg: Leg,
    /// The parameter held fixed along this leg (η for λ-paths, λ for η-paths).
    pub fixed_value: f64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedModel {
    pub lambda_star: f64,
    /// `None` for rules without a second parameter.
    pub eta_star: Option<f64>,
    pub validation_error: f64,
    pub result: TispResult,
    pub legs: Vec<LegRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub lambda_points: usize,
    pub eta_points: usize,
    pub ridge_points: usize,
    pub solve: SolveOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            lambda_points: crate::solver::DEFAULT_GRID_POINTS,
            eta_points: DEFAULT_ETA_POINTS,
            ridge_points: DEFAULT_RIDGE_POINTS,
            solve: SolveOptions::default(),
        }
    }
}

/// Smaller error wins; ties go to the larger λ, then the larger η.
fn better(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && (a.1 > b.1 || (a.1 == b.1 && a.2 > b.2)))
}

struct Scored {
    lambda: f64,
    eta: f64,
    score: f64,
    result: TispResult,
}

/// Runs each leg of a hybrid search plan on `template`'s data and scaling;
/// returns the overall validation minimizer.
pub fn execute_search(
    plan: &SearchPlan,
    template: &TispProblem,
    validation: (&DenseMatrix, &[f64]),
    options: &SearchOptions,
) -> Result<TunedModel> {
    let (xv, yv) = validation;
    let eta_ref = match plan.eta_reference {
        Some(e) => e,
        None => ridge_reference(
            template.x(),
            template.y(),
            &RidgeScoring::Validation(xv, yv),
            &default_ridge_grid(template.x(), options.ridge_points),
        )?,
    };
    let lambdas = lambda_grid(template, options.lambda_points);
    let mut legs: Vec<LegRecord> = Vec::new();
    let mut leg_best: Vec<Option<(f64, f64, f64)>> = Vec::new();
    let mut overall: Option<Scored> = None;

    for leg in &plan.legs {
        let (fixed, runs): (f64, Vec<(f64, f64)>) = match *leg {
            Leg::LambdaPath { eta_factor } => {
                let eta = eta_factor * eta_ref;
                (eta, lambdas.iter().map(|&l| (l, eta)).collect())
            }
            Leg::EtaPath { lambda_from } => {
                let lambda = leg_best
                    .get(lambda_from)
                    .copied()
                    .flatten()
                    .map(|b| b.1)
                    .ok_or_else(|| Error::AllFailed(format!("search leg {lambda_from} produced no usable fit")))?;
                (lambda, eta_grid(eta_ref, options.eta_points).into_iter().map(|e| (lambda, e)).collect())
            }
        };
        let fits: Vec<Option<(f64, TispResult)>> = runs
            .par_iter()
            .map(|&(lambda, eta)| {
                let problem = template
                    .with_rule(ThresholdRule::Hybrid { eta })
                    .and_then(|p| p.with_lambda(Lambda::Scalar(lambda)))
                    .ok()?;
                let res = solve(&problem, &vec![0.0; template.p()], options.solve.tol, options.solve.max_iter).ok()?;
                Some((validation_mse(xv, yv, &res.beta_hat), res))
            })
            .collect();
        let mut best_here: Option<(f64, f64, f64)> = None;
        let mut candidates = Vec::with_capacity(runs.len());
        for (&(lambda, eta), fit) in runs.iter().zip(fits) {
            match fit {
                Some((score, result)) => {
                    candidates.push(Candidate { lambda, eta: Some(eta), validation_error: Some(score), failed: false });
                    let key = (score, lambda, eta);
                    if best_here.is_none_or(|b| better(key, b)) {
                        best_here = Some(key);
                    }
                    if overall.as_ref().is_none_or(|o| better(key, (o.score, o.lambda, o.eta))) {
                        overall = Some(Scored { lambda, eta, score, result });
                    }
                }
                None => candidates.push(Candidate { lambda, eta: Some(eta), validation_error: None, failed: true }),
            }
        }
        legs.push(LegRecord { leg: *leg, fixed_value: fixed, candidates });
        leg_best.push(best_here);
    }

    let best = overall.ok_or_else(|| Error::AllFailed("no candidate in the search produced a fit".into()))?;
    Ok(TunedModel {
        lambda_star: best.lambda,
        eta_star: Some(best.eta),
        validation_error: best.score,
        result: best.result,
        legs,
    })
}

/// Hybrid tuning end to end: `σ̂` (when `n > p`), the plan, then the search.
pub fn tune_hybrid(template: &TispProblem, validation: (&DenseMatrix, &[f64]), options: &SearchOptions) -> Result<TunedModel> {
    let (n, p) = (template.n(), template.p());
    let sigma = if n > p { ols_sigma_hat(template.x(), template.y()).ok() } else { None };
    execute_search(&plan_search(n, p, sigma), template, validation, options)
}

/// Validation-minimizing λ on the default linear grid for a one-parameter rule.
pub fn tune_lambda(template: &TispProblem, validation: (&DenseMatrix, &[f64]), options: &SearchOptions) -> Result<TunedModel> {
    let grid = lambda_grid(template, options.lambda_points);
    let path = solution_path(template, &grid, Some(validation), options.solve)?;
    let candidates = path
        .records
        .iter()
        .map(|r| Candidate {
            lambda: r.lambda,
            eta: None,
            validation_error: r.validation_score,
            failed: r.result.is_none(),
        })
        .collect();
    let best = path
        .best_by_validation()
        .ok_or_else(|| Error::AllFailed("every solve on the lambda path failed".into()))?;
    Ok(TunedModel {
        lambda_star: best.lambda,
        eta_star: None,
        validation_error: best.validation_score.unwrap_or(f64::NAN),
        result: best.result.clone().ok_or_else(|| Error::AllFailed("best record has no fit".into()))?,
        legs: vec![LegRecord { leg: Leg::LambdaPath { eta_factor: 0.0 }, fixed_value: 0.0, candidates }],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LooScore {
    pub score: f64,
    pub failed_folds: usize,
}

/// Mean squared leave-one-out prediction error of the zero-start fit with
/// `rule` at `lambda` (scaled by `k₀` per fold). Failed folds are excluded and counted.
pub fn loo_cv_score(x: &DenseMatrix, y: &[f64], rule: ThresholdRule, lambda: f64, options: SolveOptions) -> Result<LooScore> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Dimension("leave-one-out needs at least two cases".into()));
    }
    if y.len() != n {
        return Err(Error::Dimension(format!("X has {n} rows but y has length {}", y.len())));
    }
    let folds: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let xs = x.select_rows(&keep);
            let ys = DenseVector::new(keep.iter().map(|&j| y[j]).collect()).ok()?;
            let p = TispProblem::new(xs, ys, rule, Lambda::Scalar(lambda), ScaleMode::AutoK0).ok()?;
            let r = solve(&p, &vec![0.0; x.cols()], options.tol, options.max_iter).ok()?;
            let pred: f64 = x.row(i).iter().zip(r.beta_hat.iter()).map(|(a, b)| a * b).sum();
            Some((y[i] - pred).powi(2))
        })
        .collect();
    let ok: Vec<f64> = folds.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::AllFailed("every leave-one-out fold failed".into()));
    }
    Ok(LooScore { score: ok.iter().sum::<f64>() / ok.len() as f64, failed_folds: n - ok.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn branch_examples() {
        assert_eq!(plan_search(200, 8, Some(2.0)).branch, Branch::LargeNSmallNoise);
        assert_eq!(plan_search(20, 8, Some(2.0)).branch, Branch::AlternatingSearch);
        let large = plan_search(20, 100, None);
        assert_eq!(large.branch, Branch::LargeP);
        assert_eq!(large.legs.len(), 3);
        assert_eq!(plan_search(10, 10, None).branch, Branch::LargeP);
    }

    #[test]
    fn branch_boundaries() {
        // p = 10; n/p over the decision points, σ̂ around 5.
        let cases = [
            (49, 4.9, Branch::AlternatingSearch),
            (49, 5.1, Branch::AlternatingSearch),
            (50, 4.9, Branch::AlternatingSearch),
            (50, 5.0, Branch::AlternatingSearch),
            (99, 4.9, Branch::TwoLambdaPaths),
            (99, 5.0, Branch::AlternatingSearch),
            (99, 5.1, Branch::AlternatingSearch),
            (100, 4.9, Branch::TwoLambdaPaths),
            (100, 5.0, Branch::AlternatingSearch),
            (100, 5.1, Branch::AlternatingSearch),
            (101, 4.9, Branch::LargeNSmallNoise),
            (101, 5.0, Branch::TwoLambdaPaths),
            (101, 5.1, Branch::TwoLambdaPaths),
        ];
        for (n, s, want) in cases {
            let plan = plan_search(n, 10, Some(s));
            assert_eq!(plan.branch, want, "n = {n}, sigma = {s}");
            assert!(plan.legs.iter().any(|l| matches!(l, Leg::LambdaPath { .. })));
        }
        assert_eq!(plan_search(300, 10, None).branch, Branch::TwoLambdaPaths);
    }

    #[test]
    fn sigma_hat_exact_fit() {
        let x = DenseMatrix::new(10, 2, lcg(20, 1)).unwrap();
        let y = x.matvec(&[1.0, -2.0]);
        assert!(ols_sigma_hat(&x, &y).unwrap() < 1e-10);
        assert!(ols_sigma_hat(&DenseMatrix::new(2, 2, lcg(4, 2)).unwrap(), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ridge_loo_matches_explicit_loop() {
        let x = DenseMatrix::new(10, 3, lcg(30, 5)).unwrap();
        let y = lcg(10, 6);
        let eta = 0.7;
        let mut total = 0.0;
        for i in 0..10 {
            let keep: Vec<usize> = (0..10).filter(|&j| j != i).collect();
            let b = ridge_solve(&x.select_rows(&keep), &keep.iter().map(|&j| y[j]).collect::<Vec<_>>(), eta).unwrap();
            let pred: f64 = x.row(i).iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            total += (y[i] - pred).powi(2);
        }
        assert!((ridge_loo(&x, &y, eta).unwrap() - total / 10.0).abs() < 1e-10);
    }

    #[test]
    fn ridge_dual_matches_primal() {
        let x = DenseMatrix::new(4, 6, lcg(24, 8)).unwrap();
        let y = lcg(4, 9);
        let dual = ridge_solve(&x, &y, 0.3).unwrap();
        let all = IndexSet::from_predicate(6, |_| true);
        let primal = crate::solver::partial_ridge(&x, &y, &all, 0.3).unwrap();
        for i in 0..6 {
            assert!((dual[i] - primal[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn ridge_reference_single_point() {
        let x = DenseMatrix::new(10, 2, lcg(20, 3)).unwrap();
        let y = lcg(10, 4);
        assert_eq!(ridge_reference(&x, &y, &RidgeScoring::LeaveOneOut, &[0.25]).unwrap(), 0.25);
        assert!(ridge_reference(&x, &y, &RidgeScoring::LeaveOneOut, &[]).is_err());
    }

    #[test]
    fn loo_intercept_identity() {
        let y = [1.0, 3.0, 2.0, 7.0, 4.0];
        let n = y.len() as f64;
        let x = DenseMatrix::new(5, 1, vec![1.0; 5]).unwrap();
        let opts = SolveOptions { tol: 1e-13, max_iter: 100_000 };
        let got = loo_cv_score(&x, &y, ThresholdRule::Soft, 0.0, opts).unwrap();
        let mean = y.iter().sum::<f64>() / n;
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        assert!((got.score - n * ss / (n - 1.0).powi(2)).abs() < 1e-9);
        let zero = loo_cv_score(&x, &y, ThresholdRule::Hard, 1e6, opts).unwrap();
        assert!((zero.score - y.iter().map(|v| v * v).sum::<f64>() / n).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_search() {
        let x = DenseMatrix::new(12, 3, lcg(36, 10)).unwrap();
        let y = DenseVector::new(lcg(12, 11)).unwrap();
        let template = TispProblem::new(x.clone(), y.clone(), ThresholdRule::Hybrid { eta: 1.0 }, 0.0.into(), ScaleMode::AutoK0).unwrap();
        let plan = SearchPlan {
            branch: Branch::LargeNSmallNoise,
            eta_reference: Some(2.0),
            legs: vec![Leg::LambdaPath { eta_factor: 0.05 }],
        };
        let options = SearchOptions { lambda_points: 1, eta_points: 1, ..Default::default() };
        let tuned = execute_search(&plan, &template, (&x, &y), &options).unwrap();
        assert_eq!(tuned.lambda_star, template.lambda_max());
        assert_eq!(tuned.eta_star, Some(0.1));
    }

    #[test]
    fn alternating_second_leg_holds_lambda() {
        let x = DenseMatrix::new(20, 4, lcg(80, 12)).unwrap();
        let y: Vec<f64> = x.matvec(&[2.0, 0.0, -1.0, 0.0]).iter().zip(lcg(20, 13)).map(|(a, e)| a + 0.3 * e).collect();
        let y = DenseVector::new(y).unwrap();
        let template = TispProblem::new(x.clone(), y.clone(), ThresholdRule::Hybrid { eta: 1.0 }, 0.0.into(), ScaleMode::AutoK0).unwrap();
        let options = SearchOptions { lambda_points: 20, eta_points: 8, ..Default::default() };
        let plan = plan_search(20, 4, Some(0.3));
        assert_eq!(plan.branch, Branch::AlternatingSearch);
        let tuned = execute_search(&plan, &template, (&x, &y), &options).unwrap();
        let first = &tuned.legs[0];
        let best = first
            .candidates
            .iter()
            .filter(|c| c.validation_error.is_some())
            .fold(None::<&Candidate>, |b, c| match b {
                Some(b) if (b.validation_error, -b.lambda) <= (c.validation_error, -c.lambda) => Some(b),
                _ => Some(c),
            })
            .unwrap();
        assert!(tuned.legs[1].candidates.iter().all(|c| c.lambda == best.lambda));
        let min = tuned.legs.iter().flat_map(|l| &l.candidates).filter_map(|c| c.validation_error).fold(f64::INFINITY, f64::min);
        assert_eq!(tuned.validation_error, min);
    }
}
