//! Design quantities (μ, κ, ν, ι), nonasymptotic selection and risk bounds,
//! the orthogonal-design oracle bound, an exhaustive ℓ0 reference solver and
//! Monte Carlo estimators for checking the bounds empirically.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::linalg::{gram, solve_spd, spectral_norm_default, symmetric_eigenvalues, DenseMatrix, DenseVector, IndexSet};
use crate::rng;
use crate::solver::{partial_ridge, solve, Lambda, ScaleMode, SolveOptions, TispProblem};
use crate::thresholds::ThresholdRule;

const EIGEN_TOL: f64 = 1e-10;
const NORMALIZATION_TOL: f64 = 1e-8;
pub const L0_SUPPORT_BUDGET: u128 = 1_000_000;

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityQuantities {
    /// Smallest eigenvalue of `Σ^(s)` on the true support.
    pub mu: f64,
    pub kappa: f64,
    /// Smallest eigenvalue of `Σ^(s)` off the support; `None` when the true coefficient vector has no zeros.
    pub nu: Option<f64>,
    /// Present when a ridge parameter was supplied.
    pub iota: Option<f64>,
    pub d_z: usize,
    pub d_nz: usize,
    pub k0: f64,
    pub n: usize,
    pub min_abs_beta_nz: f64,
    pub norm_beta_nz: f64,
    /// Largest eigenvalue of `Σ^(s)`.
    pub mu_max: f64,
}

/// Quantities of a design whose columns all have squared norm `n`
/// (unnormalized designs are rejected, not rescaled).
pub fn compute_quantities(x: &DenseMatrix, beta_true: &[f64], eta: Option<f64>) -> Result<SparsityQuantities> {
    let (n, p) = (x.rows(), x.cols());
    if beta_true.len() != p {
        return Err(Error::Dimension(format!("beta has length {}, expected {p}", beta_true.len())));
    }
    for (index, c) in x.column_norms().iter().enumerate() {
        let found = c * c;
        if (found - n as f64).abs() > NORMALIZATION_TOL * n as f64 {
            return Err(Error::NotNormalized { index, found });
        }
    }
    let nz = IndexSet::support(beta_true);
    if nz.is_empty() {
        return Err(Error::InvalidArgument("true coefficient vector has no nonzero entries".into()));
    }
    let z = nz.complement(p);
    let sigma = gram(x)?;
    let sigma_s = sigma.scaled(1.0 / n as f64);

    let mu = symmetric_eigenvalues(&sigma_s.principal(&nz), EIGEN_TOL)?[0];
    let nu = if z.is_empty() { None } else { Some(symmetric_eigenvalues(&sigma_s.principal(&z), EIGEN_TOL)?[0]) };
    let d_nz = nz.len();
    let kappa = z
        .iter()
        .map(|&i| nz.iter().map(|&j| sigma_s.get(i, j).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        / (d_nz as f64).sqrt();
    let beta_nz: Vec<f64> = nz.iter().map(|&i| beta_true[i]).collect();
    let iota = match eta {
        None => None,
        Some(e) => {
            if !(e >= 0.0) {
                return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {e}")));
            }
            let block = sigma.principal(&nz);
            let rhs = block.matvec(&beta_nz);
            let mut shifted = block;
            shifted.add_diagonal(e);
            let v = solve_spd(&shifted, &rhs)?;
            Some(v.iter().map(|a| a.abs()).fold(f64::INFINITY, f64::min))
        }
    };
    let eigen_all = symmetric_eigenvalues(&sigma_s, EIGEN_TOL)?;
    Ok(SparsityQuantities {
        mu,
        kappa,
        nu,
        iota,
        d_z: z.len(),
        d_nz,
        k0: spectral_norm_default(x)?,
        n,
        min_abs_beta_nz: beta_nz.iter().map(|b| b.abs()).fold(f64::INFINITY, f64::min),
        norm_beta_nz: beta_nz.iter().map(|b| b * b).sum::<f64>().sqrt(),
        mu_max: *eigen_all.last().unwrap_or(&0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    GeneralSel,
    HardFamilySel,
    HybridSel,
    RiskNz,
    RiskZ,
    OracleOrtho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Lower bound on the probability of recovering the sign pattern.
    pub success_lower: Option<f64>,
    /// Upper bound on the failure probability, or on the risk for risk kinds.
    pub upper: Option<f64>,
    /// Named arguments and unclamped bound values.
    pub intermediates: BTreeMap<String, f64>,
    pub preconditions_met: bool,
    /// Violated preconditions, written as the inequality that failed.
    pub violations: Vec<String>,
}

impl BoundReport {
    fn new(kind: BoundKind) -> Self {
        Self {
            kind,
            success_lower: None,
            upper: None,
            intermediates: BTreeMap::new(),
            preconditions_met: true,
            violations: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: f64) {
        self.intermediates.insert(key.to_string(), value);
    }

    fn require(&mut self, holds: bool, inequality: String) {
        if !holds {
            self.preconditions_met = false;
            self.violations.push(inequality);
        }
    }
}

/// `a/(√n σ)` with the noiseless limit.
fn standardize(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a / scale
    } else if a > 0.0 {
        f64::INFINITY
    } else if a < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

fn power_or_one(base: f64, exp: usize) -> f64 {
    if exp == 0 {
        1.0
    } else {
        base.powi(exp as i32)
    }
}

/// `2φ(a)/a` summand, zero when the count is zero.
fn tail_term(count: usize, a: f64) -> f64 {
    if count == 0 || a.is_infinite() {
        0.0
    } else {
        2.0 * count as f64 * normal_pdf(a) / a
    }
}

/// Shared finish for the three selection bounds: product lower bound and
/// tail-sum upper bound from the two standardized margins.
fn selection_bounds(report: &mut BoundReport, m: f64, l: f64, d_z: usize, d_nz: usize, with_lower: bool) {
    let m_ok = d_z == 0 || m > 0.0;
    let l_ok = d_nz == 0 || l > 0.0;
    if !m_ok {
        report.violations.push(format!("margin for zero coefficients {m} <= 0"));
    }
    if !l_ok {
        report.violations.push(format!("margin for nonzero coefficients {l} <= 0"));
    }
    if m_ok && l_ok {
        let raw_upper = tail_term(d_z, m) + tail_term(d_nz, l);
        report.set("raw_failure_upper", raw_upper);
        report.upper = Some(raw_upper.clamp(0.0, 1.0));
        if with_lower {
            let raw_lower =
                power_or_one(1.0 - 2.0 * normal_cdf(-m), d_z) * power_or_one(1.0 - 2.0 * normal_cdf(-l), d_nz);
            report.set("raw_success_lower", raw_lower);
            report.success_lower = Some(raw_lower.clamp(0.0, 1.0));
        }
    } else {
        report.upper = Some(1.0);
        if with_lower {
            report.success_lower = Some(0.0);
        }
    }
}

/// Sign-recovery bound for any sandwiched rule with threshold `τ`.
pub fn bound_general_selection(q: &SparsityQuantities, tau: f64, sigma: f64, min_abs_beta_nz: f64) -> BoundReport {
    let n = q.n as f64;
    let dnz = q.d_nz as f64;
    let mut r = BoundReport::new(BoundKind::GeneralSel);
    r.require(q.mu > 0.0, format!("mu > 0 (mu = {})", q.mu));
    r.require(q.mu >= q.kappa * dnz, format!("mu >= kappa * d_nz ({} < {})", q.mu, q.kappa * dnz));
    let needed = dnz * tau / (n * q.mu);
    r.require(min_abs_beta_nz >= needed, format!("min|beta_nz| >= d_nz * tau / (n * mu) ({min_abs_beta_nz} < {needed})"));
    let m = standardize((1.0 - q.kappa * dnz / q.mu) * tau, n.sqrt() * sigma);
    let l = standardize((q.mu * n).sqrt() * (min_abs_beta_nz - needed), sigma);
    r.set("M", m);
    r.set("L", l);
    selection_bounds(&mut r, m, l, q.d_z, q.d_nz, true);
    r
}

/// Sign-recovery bound for rules with `Θ(t) = t` beyond `cτ`.
pub fn bound_hard_family_selection(q: &SparsityQuantities, tau: f64, sigma: f64, c: f64, min_abs_beta_nz: f64) -> BoundReport {
    let n = q.n as f64;
    let k02 = q.k0 * q.k0;
    let mut r = BoundReport::new(BoundKind::HardFamilySel);
    r.require(c >= 1.0, format!("c >= 1 (c = {c})"));
    r.require(q.mu > 0.0, format!("mu > 0 (mu = {})", q.mu));
    let needed = c * tau / k02;
    r.require(min_abs_beta_nz >= needed, format!("min|beta_nz| >= c * tau / k0^2 ({min_abs_beta_nz} < {needed})"));
    let m = standardize(c * tau, n.sqrt() * sigma);
    let l = standardize((q.mu * n).sqrt() * (min_abs_beta_nz - needed), sigma);
    r.set("M'", m);
    r.set("L'", l);
    let threshold = q.d_nz as f64 * k02 / (q.mu * n);
    r.set("improvement_threshold_c", threshold);
    r.set("improves_on_general", if c < threshold { 1.0 } else { 0.0 });
    selection_bounds(&mut r, m, l, q.d_z, q.d_nz, true);
    r
}

/// Whether the hard-family bound strictly beats the general one: `c < d_nz k₀²/(μn)`.
pub fn hard_family_improves(q: &SparsityQuantities, c: f64) -> bool {
    c < q.d_nz as f64 * q.k0 * q.k0 / (q.mu * q.n as f64)
}

/// Upper bound on the probability of a wrong sparsity pattern for the hybrid rule.
pub fn bound_hybrid_selection(q: &SparsityQuantities, lambda: f64, eta: f64, sigma: f64, norm_beta_nz: f64) -> BoundReport {
    let n = q.n as f64;
    let dnz = q.d_nz as f64;
    let k02 = q.k0 * q.k0;
    let mut r = BoundReport::new(BoundKind::HybridSel);
    r.require(q.mu > 0.0, format!("mu > 0 (mu = {})", q.mu));
    if eta > 0.0 {
        let cap = lambda / (norm_beta_nz * dnz.sqrt()) * (n * q.mu + eta) / (n * eta);
        r.require(q.kappa <= cap, format!("kappa <= lambda (n mu + eta) / (||beta_nz|| sqrt(d_nz) n eta) ({} > {cap})", q.kappa));
    }
    let Some(iota) = q.iota else {
        r.require(false, "iota available (quantities computed without eta)".into());
        r.upper = Some(1.0);
        return r;
    };
    let floor = lambda / (k02 + eta);
    r.require(iota >= floor, format!("iota >= lambda / (k0^2 + eta) ({iota} < {floor})"));
    let m = standardize(lambda - n * eta / (n * q.mu + eta) * q.kappa * norm_beta_nz * dnz.sqrt(), n.sqrt() * sigma);
    let l = standardize((n * q.mu + eta) * (iota - floor), (n * q.mu).sqrt() * sigma);
    r.set("M''", m);
    r.set("L''", l);
    selection_bounds(&mut r, m, l, q.d_z, q.d_nz, false);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBounds {
    pub z: BoundReport,
    pub nz: BoundReport,
}

/// Risk bounds for `E‖β̂_z‖²` and `E‖β̂_nz − β_nz‖²`; the second consumes the first.
pub fn bound_risk(q: &SparsityQuantities, tau: f64, sigma: f64) -> RiskBounds {
    let n = q.n as f64;
    let (dz, dnz) = (q.d_z as f64, q.d_nz as f64);
    let (mu, kappa) = (q.mu, q.kappa);
    let mut rz = BoundReport::new(BoundKind::RiskZ);
    let mut rnz = BoundReport::new(BoundKind::RiskNz);
    for r in [&mut rz, &mut rnz] {
        r.require(mu > 0.0, format!("mu > 0 (mu = {mu})"));
        r.require(mu >= kappa * dnz, format!("mu >= kappa * d_nz ({mu} < {})", kappa * dnz));
        if let Some(nu) = q.nu {
            r.require(nu > 0.0, format!("nu > 0 (nu = {nu})"));
            let cap = mu * nu / (dz * dnz);
            r.require(kappa * kappa <= cap, format!("kappa^2 <= mu nu / (d_z d_nz) ({} > {cap})", kappa * kappa));
        }
    }

    let risk_z = match q.nu {
        None => Some(0.0),
        Some(nu) => {
            let m = standardize((1.0 - kappa * dnz / mu) * tau, n.sqrt() * sigma);
            let shrink = 1.0 - kappa * kappa * dz * dnz / (mu * nu);
            let k1 = 6.0 * (1.0 + (1.0 + kappa * kappa * dnz * dnz / (mu * mu)) / (1.0 - kappa * dnz / mu).powi(2))
                / (shrink * shrink);
            let k2 = 6.0 / (shrink * shrink);
            rz.set("M", m);
            rz.set("K1", k1);
            rz.set("K2", k2);
            if !(m > 0.0) {
                rz.violations.push(format!("M = {m} <= 0"));
                None
            } else if m.is_infinite() {
                Some(0.0)
            } else {
                Some(sigma * sigma / n * dz * dz / (nu * nu) * (k1 * m + k2 / m) * normal_pdf(m))
            }
        }
    };
    if let Some(v) = risk_z {
        rz.set("raw_bound", v);
    }
    rz.upper = if rz.preconditions_met { risk_z } else { None };

    let third = risk_z.map(|v| kappa * kappa * dz * dnz / (mu * mu) * n * v);
    if let Some(t) = third {
        let raw = 3.0 / n * (dnz / mu * sigma * sigma + dnz / (mu * mu) * tau * tau / n + t);
        rnz.set("raw_bound", raw);
        rnz.upper = if rnz.preconditions_met { Some(raw) } else { None };
    } else {
        rnz.violations.push("R_z bound unavailable".into());
    }
    RiskBounds { z: rz, nz: rnz }
}

/// `(2 log n + 1)(σ²/√(π log n) + Σ min(βᵢ², σ²))`.
pub fn oracle_bound_orthogonal(beta_true: &[f64], sigma: f64, n: f64) -> f64 {
    let ln = n.ln();
    let s2 = sigma * sigma;
    (2.0 * ln + 1.0) * (s2 / (std::f64::consts::PI * ln).sqrt() + beta_true.iter().map(|b| (b * b).min(s2)).sum::<f64>())
}

pub fn oracle_report(beta_true: &[f64], sigma: f64, n: f64) -> BoundReport {
    let mut r = BoundReport::new(BoundKind::OracleOrtho);
    r.require(n >= 2.0, format!("n >= 2 (n = {n})"));
    let v = oracle_bound_orthogonal(beta_true, sigma, n);
    r.set("tau", (2.0 * n.ln()).sqrt());
    r.set("raw_bound", v);
    r.upper = Some(v);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L0Solution {
    pub beta: DenseVector,
    pub objective: f64,
    pub support: IndexSet,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Advances `idx` to the next `k`-combination of `0..p` in lexicographic order.
fn next_combination(idx: &mut [usize], p: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < p - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact minimizer of `½‖Xβ − y‖² + c‖β‖₀` over supports of size at most
/// `max_support`. Supports with a singular gram block are skipped.
pub fn l0_brute_force(x: &DenseMatrix, y: &[f64], c: f64, max_support: usize) -> Result<L0Solution> {
    let p = x.cols();
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!("X has {} rows but y has length {}", x.rows(), y.len())));
    }
    if !(c >= 0.0) {
        return Err(Error::InvalidArgument(format!("per-nonzero penalty must be nonnegative, got {c}")));
    }
    let kmax = max_support.min(p);
    let required: u128 = (0..=kmax).map(|k| binomial(p, k)).fold(0u128, |a, b| a.saturating_add(b));
    if required > L0_SUPPORT_BUDGET {
        return Err(Error::Budget { required, limit: L0_SUPPORT_BUDGET });
    }
    let sigma = gram(x)?;
    let xty = x.t_matvec(y);
    let half_yy = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
    let mut best = L0Solution { beta: DenseVector::zeros(p), objective: half_yy, support: IndexSet::from_predicate(p, |_| false) };
    for k in 1..=kmax {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let support = IndexSet::new(idx.clone(), p)?;
            let rhs: Vec<f64> = idx.iter().map(|&i| xty[i]).collect();
            if let Ok(coef) = solve_spd(&sigma.principal(&support), &rhs) {
                let obj = half_yy - 0.5 * rhs.iter().zip(coef.iter()).map(|(a, b)| a * b).sum::<f64>() + c * k as f64;
                if obj < best.objective {
                    let mut beta = vec![0.0; p];
                    for (j, &i) in idx.iter().enumerate() {
                        beta[i] = coef[j];
                    }
                    best = L0Solution { beta: DenseVector::new(beta)?, objective: obj, support };
                }
            }
            if !next_combination(&mut idx, p) {
                break;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessCriterion {
    /// `sgn(β̂) = sgn(β)` coordinatewise.
    SignPattern,
    /// Zero sets agree.
    SupportPattern,
}

/// Starting points tried per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McStarts {
    Zero,
    /// The zero start, then the least-squares fit on the true support
    /// (partial ridge for the hybrid rule). A replication succeeds when
    /// either start converges to a fixed point with the right pattern.
    ZeroAndSupport,
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub x: DenseMatrix,
    pub beta_true: DenseVector,
    pub rule: ThresholdRule,
    pub lambda: f64,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
    pub scale_mode: ScaleMode,
    pub criterion: SuccessCriterion,
    pub solve: SolveOptions,
    /// Used by [`mc_sign_recovery`] only; risk estimates always use the zero start.
    pub starts: McStarts,
}

impl McConfig {
    pub fn new(x: DenseMatrix, beta_true: DenseVector, rule: ThresholdRule, lambda: f64, sigma: f64, reps: usize, seed: u64) -> Self {
        Self {
            x,
            beta_true,
            rule,
            lambda,
            sigma,
            reps,
            seed,
            scale_mode: ScaleMode::AutoK0,
            criterion: SuccessCriterion::SignPattern,
            solve: SolveOptions::default(),
            starts: McStarts::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
    /// Replications whose solve did not converge (counted as failures).
    pub nonconverged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRisk {
    pub r_z: f64,
    pub r_z_se: f64,
    pub r_nz: f64,
    pub r_nz_se: f64,
    pub total: f64,
    pub total_se: f64,
    pub reps: usize,
    pub nonconverged: usize,
}

struct Draw {
    beta_hat: Vec<f64>,
    converged: bool,
}

/// Solves one noisy replication per index from each requested start;
/// results come back in replication order, starts in the order tried.
fn mc_draws(config: &McConfig, starts: McStarts) -> Result<Vec<Vec<Draw>>> {
    if config.reps == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one replication".into()));
    }
    if !(config.sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {}", config.sigma)));
    }
    let signal = config.x.matvec(&config.beta_true);
    let base = TispProblem::new(
        config.x.clone(),
        DenseVector::new(signal.clone())?,
        config.rule,
        Lambda::Scalar(config.lambda),
        config.scale_mode,
    )?;
    let zero = vec![0.0; config.x.cols()];
    let support = IndexSet::support(&config.beta_true);
    let eta = match config.rule {
        ThresholdRule::Hybrid { eta } => eta,
        _ => 0.0,
    };
    (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut stream = rng::stream(config.seed, rep as u64, "mc-noise");
            let y: Vec<f64> = signal.iter().map(|s| s + config.sigma * rng::standard_normal(&mut stream)).collect();
            let problem = base.with_response(DenseVector::new(y)?)?;
            let mut inits = vec![zero.clone()];
            if starts == McStarts::ZeroAndSupport && !support.is_empty() {
                inits.push(partial_ridge(problem.x(), problem.y(), &support, eta)?.into_vec());
            }
            inits
                .iter()
                .map(|init| {
                    let r = solve(&problem, init, config.solve.tol, config.solve.max_iter)?;
                    Ok(Draw { beta_hat: r.beta_hat.into_vec(), converged: r.converged })
                })
                .collect()
        })
        .collect()
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Monte Carlo probability that a fixed point reached from the configured
/// starts recovers the pattern of `β`, with its binomial standard error.
/// `nonconverged` counts replications with at least one non-converged solve.
pub fn mc_sign_recovery(config: &McConfig) -> Result<McEstimate> {
    let draws = mc_draws(config, config.starts)?;
    let truth = config.beta_true.as_slice();
    let matches = |d: &Draw| {
        d.converged
            && d.beta_hat.iter().zip(truth).all(|(b, t)| match config.criterion {
                SuccessCriterion::SignPattern => sign(*b) == sign(*t),
                SuccessCriterion::SupportPattern => (*b == 0.0) == (*t == 0.0),
            })
    };
    let hits = draws.iter().filter(|rep| rep.iter().any(matches)).count();
    let nonconverged = draws.iter().filter(|rep| rep.iter().any(|d| !d.converged)).count();
    let reps = draws.len();
    let p = hits as f64 / reps as f64;
    Ok(McEstimate { estimate: p, std_error: (p * (1.0 - p) / reps as f64).sqrt(), reps, nonconverged })
}

/// Monte Carlo `E‖β̂_z‖²`, `E‖β̂_nz − β_nz‖²` and their sum.
pub fn mc_risk(config: &McConfig) -> Result<McRisk> {
    let draws: Vec<Draw> = mc_draws(config, McStarts::Zero)?.into_iter().flatten().collect();
    let truth = config.beta_true.as_slice();
    let mut rz = Vec::with_capacity(draws.len());
    let mut rnz = Vec::with_capacity(draws.len());
    let mut total = Vec::with_capacity(draws.len());
    for d in &draws {
        let (mut a, mut b) = (0.0, 0.0);
        for (bh, t) in d.beta_hat.iter().zip(truth) {
            if *t == 0.0 {
                a += bh * bh;
            } else {
                b += (bh - t).powi(2);
            }
        }
        rz.push(a);
        rnz.push(b);
        total.push(a + b);
    }
    let (r_z, r_z_se) = mean_se(&rz);
    let (r_nz, r_nz_se) = mean_se(&rnz);
    let (t, t_se) = mean_se(&total);
    Ok(McRisk {
        r_z,
        r_z_se,
        r_nz,
        r_nz_se,
        total: t,
        total_se: t_se,
        reps: draws.len(),
        nonconverged: draws.iter().filter(|d| !d.converged).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn identity_quantities(d_z: usize, d_nz: usize, n: usize, kappa: f64) -> SparsityQuantities {
        SparsityQuantities {
            mu: 1.0,
            kappa,
            nu: Some(1.0),
            iota: None,
            d_z,
            d_nz,
            k0: (n as f64).sqrt(),
            n,
            min_abs_beta_nz: 1.0,
            norm_beta_nz: 1.0,
            mu_max: 1.0,
        }
    }

    #[test]
    fn normal_functions() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let tail = simpson(normal_pdf, -12.0, -2.0, 20_000);
        assert!((normal_cdf(-2.0) - tail).abs() < 1e-12, "{} {}", normal_cdf(-2.0), tail);
        assert!((normal_cdf(-2.0) - 0.022_750_131_948_179_2).abs() < 1e-15);
    }

    #[test]
    fn general_selection_toy() {
        let q = identity_quantities(1, 1, 100, 0.0);
        let r = bound_general_selection(&q, 20.0, 1.0, 1.0);
        assert!((r.intermediates["M"] - 2.0).abs() < 1e-12);
        assert!((r.intermediates["L"] - 8.0).abs() < 1e-12);
        let want = (1.0 - 2.0 * normal_cdf(-2.0)) * (1.0 - 2.0 * normal_cdf(-8.0));
        assert!((r.success_lower.unwrap() - want).abs() < 1e-14);
        assert!((want - 0.9545).abs() < 1e-4);
        assert!(r.preconditions_met);

        let edge = bound_general_selection(&q, 100.0, 1.0, 1.0);
        assert_eq!(edge.success_lower, Some(0.0));
        let killed = bound_general_selection(&q, 1e4, 1.0, 1.0);
        assert_eq!(killed.success_lower, Some(0.0));
        assert!(!killed.preconditions_met);
    }

    #[test]
    fn general_selection_monotone() {
        let q = identity_quantities(5, 2, 100, 0.1);
        let mut prev = 0.0;
        for k in 0..50 {
            let b = bound_general_selection(&q, 30.0, 1.0, 0.5 + 0.05 * k as f64).success_lower.unwrap();
            assert!(b >= prev);
            prev = b;
        }
        let mut prev = 1.0;
        for k in 1..50 {
            let b = bound_general_selection(&q, 30.0, 0.1 * k as f64, 1.5).success_lower.unwrap();
            assert!(b <= prev + 1e-15);
            prev = b;
        }
    }

    #[test]
    fn hard_family_toy() {
        let q = identity_quantities(1, 1, 100, 0.0);
        let r = bound_hard_family_selection(&q, 20.0, 1.0, 1.0, 1.0);
        assert!((r.intermediates["M'"] - 2.0).abs() < 1e-12);
        assert!((r.intermediates["L'"] - 8.0).abs() < 1e-12);
        let scad = bound_hard_family_selection(&q, 20.0, 1.0, 3.7, 1.0);
        assert!(scad.intermediates["L'"] < r.intermediates["L'"]);
    }

    #[test]
    fn hybrid_reductions() {
        let mut q = identity_quantities(3, 2, 100, 0.0);
        q.iota = Some(1.0);
        let r = bound_hybrid_selection(&q, 25.0, 3.0, 1.0, 2.0);
        assert!((r.intermediates["M''"] - 2.5).abs() < 1e-12);
        q.kappa = 0.2;
        let zero_eta = bound_hybrid_selection(&q, 25.0, 0.0, 1.0, 2.0);
        assert!((zero_eta.intermediates["M''"] - 2.5).abs() < 1e-12);
        assert!((zero_eta.intermediates["L''"] - 10.0 * (1.0 - 0.25)).abs() < 1e-12);
        let vacuous = bound_hybrid_selection(&q, 1e4, 0.0, 1.0, 2.0);
        assert_eq!(vacuous.upper, Some(1.0));
    }

    #[test]
    fn risk_at_zero_kappa() {
        let q = identity_quantities(4, 3, 100, 0.0);
        let b = bound_risk(&q, 20.0, 1.0);
        assert_eq!(b.z.intermediates["K1"], 12.0);
        assert_eq!(b.z.intermediates["K2"], 6.0);
        let want_nz = 3.0 / 100.0 * (3.0 + 3.0 * 400.0 / 100.0);
        assert!((b.nz.upper.unwrap() - want_nz).abs() < 1e-14);
    }

    #[test]
    fn risk_toy_duplicate_arithmetic() {
        let q = identity_quantities(4, 3, 100, 0.05);
        let b = bound_risk(&q, 20.0, 1.0);
        let m = (1.0 - 0.05 * 3.0) * 20.0 / 10.0;
        let shrink: f64 = 1.0 - 0.0025 * 12.0;
        let k1 = 6.0 * (1.0 + (1.0 + 0.0025 * 9.0) / (0.85f64 * 0.85)) / (shrink * shrink);
        let k2 = 6.0 / (shrink * shrink);
        let phi = (-m * m / 2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let rz = 1.0 / 100.0 * 16.0 * (k1 * m + k2 / m) * phi;
        let rnz = 3.0 / 100.0 * (3.0 + 3.0 * 4.0 + 0.0025 * 12.0 * 100.0 * rz);
        assert!((b.z.upper.unwrap() - rz).abs() < 1e-10);
        assert!((b.nz.upper.unwrap() - rnz).abs() < 1e-10);
    }

    #[test]
    fn oracle_arithmetic() {
        let e = std::f64::consts::E;
        let v = oracle_bound_orthogonal(&[0.0; 3], 2.0, e);
        assert!((v - 3.0 * 4.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let big = oracle_bound_orthogonal(&[5.0, -7.0], 1.0, 10.0);
        let ln = 10f64.ln();
        assert!((big - (2.0 * ln + 1.0) * (1.0 / (std::f64::consts::PI * ln).sqrt() + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn quantities_on_identity() {
        let n = 4;
        let mut x = DenseMatrix::zeros(n, n);
        for i in 0..n {
            x.set(i, i, 2.0);
        }
        let q = compute_quantities(&x, &[1.0, 0.0, -3.0, 0.0], Some(0.0)).unwrap();
        assert!((q.mu - 1.0).abs() < 1e-12 && (q.nu.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(q.kappa, 0.0);
        assert!((q.iota.unwrap() - 1.0).abs() < 1e-12);
        let bad = DenseMatrix::identity(4);
        assert!(matches!(compute_quantities(&bad, &[1.0, 0.0, 0.0, 0.0], None), Err(Error::NotNormalized { .. })));
        assert!(compute_quantities(&x, &[0.0; 4], None).is_err());
    }

    #[test]
    fn l0_cases() {
        let x = DenseMatrix::from_rows(&[
            vec![0.5, 0.5, 0.5],
            vec![0.5, -0.5, 0.5],
            vec![0.5, 0.5, -0.5],
            vec![0.5, -0.5, -0.5],
        ])
        .unwrap();
        let y = [3.0, -1.0, 0.2, 1.5];
        let full = l0_brute_force(&x, &y, 0.0, 3).unwrap();
        assert_eq!(full.support.len(), 3);
        let empty = l0_brute_force(&x, &y, 1e9, 3).unwrap();
        assert!(empty.support.is_empty());
        assert!((empty.objective - 0.5 * y.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-12);
        let lam: f64 = 1.1;
        let c = x.t_matvec(&y);
        let hard = l0_brute_force(&x, &y, lam * lam / 2.0, 3).unwrap();
        for i in 0..3 {
            assert!((hard.beta[i] - ThresholdRule::Hard.apply(c[i], lam)).abs() < 1e-12);
        }
        let wide = DenseMatrix::zeros(2, 40);
        assert!(matches!(l0_brute_force(&wide, &[0.0, 0.0], 1.0, 40), Err(Error::Budget { .. })));
    }

    #[test]
    fn mc_noiseless_and_ols() {
        let x = DenseMatrix::from_rows(&[
            vec![0.5, 0.5, 0.5],
            vec![0.5, -0.5, 0.5],
            vec![0.5, 0.5, -0.5],
            vec![0.5, -0.5, -0.5],
        ])
        .unwrap();
        let beta = DenseVector::new(vec![2.0, 0.0, -3.0]).unwrap();
        let cfg = McConfig::new(x.clone(), beta.clone(), ThresholdRule::Hard, 1.0, 0.0, 100, 1);
        let est = mc_sign_recovery(&cfg).unwrap();
        assert_eq!(est.estimate, 1.0);
        let ols = McConfig::new(x, beta, ThresholdRule::Hard, 0.0, 1.0, 100, 2);
        assert_eq!(mc_sign_recovery(&ols).unwrap().estimate, 0.0);
        let risk = mc_risk(&ols).unwrap();
        assert!((risk.total - 3.0).abs() <= 3.0 * risk.total_se + 0.3);
    }
}
