//! Reference implementations used as oracles by the integration and
//! acceptance tests. Nothing here calls into the library's numerics; the
//! linear algebra goes through nalgebra.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use tisp::linalg::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(r)).collect()
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).expect("valid range").sample(r)
}

pub fn to_na(x: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    DenseMatrix::from_rows(&rows).expect("rectangular")
}

pub fn gaussian(r: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, p, &normals(r, n * p))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Gaussian design rescaled so that its spectral norm is exactly `target`.
pub fn design_with_norm(r: &mut ChaCha8Rng, n: usize, p: usize, target: f64) -> DenseMatrix {
    let g = gaussian(r, n, p);
    let s = spectral_norm(&g);
    from_na(&(g * (target / s)))
}

/// `n × p` matrix with orthonormal columns (`p ≤ n`).
pub fn orthonormal(r: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    let q = gaussian(r, n, p).qr().q();
    q.columns(0, p).into_owned()
}

/// `U diag(s) Vᵀ` with random orthonormal `U` (n×p) and `V` (p×p).
pub fn design_with_singular_values(r: &mut ChaCha8Rng, n: usize, s: &[f64]) -> DenseMatrix {
    let p = s.len();
    let u = orthonormal(r, n, p);
    let v = orthonormal(r, p, p);
    from_na(&(u * DMatrix::from_diagonal(&DVector::from_column_slice(s)) * v.transpose()))
}

/// Columns rescaled to squared norm `n`.
pub fn normalize_to_n(m: &DMatrix<f64>) -> DenseMatrix {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let norm = c.norm();
        c *= n.sqrt() / norm;
    }
    from_na(&out)
}

pub fn soft(z: f64, l: f64) -> f64 {
    z.signum() * (z.abs() - l).max(0.0)
}

fn residual(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64]) -> DVector<f64> {
    y - x * DVector::from_column_slice(beta)
}

pub fn lasso_objective(x: &DenseMatrix, y: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let r = residual(&to_na(x), &DVector::from_column_slice(y), beta);
    0.5 * r.norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Cyclic coordinate descent for `½‖y − Xβ‖² + λ‖β‖₁`.
pub fn lasso_cd(x: &DenseMatrix, y: &[f64], lambda: f64, tol: f64, max_sweeps: usize) -> Vec<f64> {
    let xm = to_na(x);
    let p = xm.ncols();
    let mut beta = vec![0.0; p];
    let mut r = DVector::from_column_slice(y);
    let norms: Vec<f64> = (0..p).map(|j| xm.column(j).norm_squared()).collect();
    for _ in 0..max_sweeps {
        let mut biggest = 0.0f64;
        for j in 0..p {
            let col = xm.column(j);
            let z = col.dot(&r) + norms[j] * beta[j];
            let new = soft(z, lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                r -= col * delta;
                beta[j] = new;
            }
            biggest = biggest.max(delta.abs());
        }
        if biggest < tol {
            break;
        }
    }
    beta
}

pub fn scad_penalty(theta: f64, lambda: f64, a: f64) -> f64 {
    let t = theta.abs();
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        -(t * t - 2.0 * a * lambda * t + lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

pub fn scad_objective(x: &DenseMatrix, y: &[f64], lambda: f64, a: f64, beta: &[f64]) -> f64 {
    let r = residual(&to_na(x), &DVector::from_column_slice(y), beta);
    0.5 * r.norm_squared() + beta.iter().map(|b| scad_penalty(*b, lambda, a)).sum::<f64>()
}

/// Minimizer of `½c(θ − z)² + P_scad(θ)`: the best of the three piecewise
/// stationary points, each clamped into its own piece.
pub fn scad_univariate(z: f64, c: f64, lambda: f64, a: f64) -> f64 {
    let s = z.signum();
    let u = z.abs();
    let f = |t: f64| 0.5 * c * (t - u).powi(2) + scad_penalty(t, lambda, a);
    let c1 = (u - lambda / c).clamp(0.0, lambda);
    let denom = c * (a - 1.0) - 1.0;
    let c2 = if denom > 0.0 { ((c * (a - 1.0) * u - a * lambda) / denom).clamp(lambda, a * lambda) } else { lambda };
    let c3 = u.max(a * lambda);
    let mut best = 0.0;
    for cand in [c1, c2, c3, lambda, a * lambda] {
        if f(cand) < f(best) {
            best = cand;
        }
    }
    s * best
}

/// Coordinate descent for the SCAD objective with coefficients outside `support` held at zero.
pub fn scad_cd_on_support(x: &DenseMatrix, y: &[f64], lambda: f64, a: f64, support: &[usize], sweeps: usize) -> Vec<f64> {
    let xm = to_na(x);
    let p = xm.ncols();
    let mut beta = vec![0.0; p];
    let mut r = DVector::from_column_slice(y);
    for _ in 0..sweeps {
        let mut biggest = 0.0f64;
        for &j in support {
            let col = xm.column(j);
            let c = col.norm_squared();
            let z = (col.dot(&r) + c * beta[j]) / c;
            let new = scad_univariate(z, c, lambda, a);
            let delta = new - beta[j];
            if delta != 0.0 {
                r -= col * delta;
                beta[j] = new;
            }
            biggest = biggest.max(delta.abs());
        }
        if biggest < 1e-14 {
            break;
        }
    }
    beta
}

/// Least squares restricted to `support`, via nalgebra's SVD solve.
pub fn ls_on_support(x: &DenseMatrix, y: &[f64], support: &[usize]) -> Vec<f64> {
    let xm = to_na(x);
    let mut beta = vec![0.0; xm.ncols()];
    if support.is_empty() {
        return beta;
    }
    let cols: Vec<_> = support.iter().map(|&j| xm.column(j).into_owned()).collect();
    let sub = DMatrix::from_columns(&cols);
    let coef = sub.svd(true, true).solve(&DVector::from_column_slice(y), 1e-14).expect("svd solve");
    for (k, &j) in support.iter().enumerate() {
        beta[j] = coef[k];
    }
    beta
}

/// Every subset of `0..p`, as index lists.
pub fn all_supports(p: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << p)).map(|mask| (0..p).filter(|j| mask & (1 << j) != 0).collect()).collect()
}

/// Independent closed-form penalties by rule name.
pub fn penalty(rule: &str, theta: f64, lambda: f64) -> f64 {
    let t = theta.abs();
    let (name, param) = match rule.split_once(':') {
        Some((n, v)) => (n, v.parse::<f64>().expect("numeric parameter")),
        None => (rule, f64::NAN),
    };
    match name {
        "soft" => lambda * t,
        "hard" => {
            if t < lambda {
                lambda * t - t * t / 2.0
            } else {
                lambda * lambda / 2.0
            }
        }
        "scad" => scad_penalty(t, lambda, param),
        "ridge" => lambda * t * t / 2.0,
        "hybrid" => {
            let knee = lambda / (1.0 + param);
            if t < knee {
                lambda * t - t * t / 2.0
            } else {
                param * t * t / 2.0 + lambda * lambda / (2.0 * (1.0 + param))
            }
        }
        other => panic!("no oracle penalty for {other}"),
    }
}

/// `argmin_θ ½(t − θ)² + P(θ)` by a dense grid on `[min(0,t), max(0,t)]`
/// followed by golden-section refinement around the best grid point.
pub fn prox_brute(rule: &str, t: f64, lambda: f64) -> f64 {
    let f = |th: f64| 0.5 * (t - th).powi(2) + penalty(rule, th, lambda);
    let (lo, hi) = if t >= 0.0 { (0.0, t) } else { (t, 0.0) };
    let m = 20_000;
    let h = (hi - lo) / m as f64;
    let mut best = (f(0.0), 0.0);
    for k in 0..=m {
        let th = lo + k as f64 * h;
        let v = f(th);
        if v < best.0 {
            best = (v, th);
        }
    }
    let (mut a, mut b) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = 0.5 * (a + b);
    if f(refined) < best.0 {
        refined
    } else {
        best.1
    }
}

/// Discontinuity points of `Θ(·; λ)` in `t` (positive side).
pub fn discontinuities(rule: &str, lambda: f64) -> Vec<f64> {
    match rule.split_once(':').map_or(rule, |(n, _)| n) {
        "hard" | "hybrid" => vec![lambda],
        _ => vec![],
    }
}
