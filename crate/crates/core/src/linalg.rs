//! Dense linear-algebra kernels used by the solver and the theory layer.
//!
//! Storage is row-major `f64`. Problem sizes here are small (a few hundred
//! columns at most), so everything is written as plain loops over slices.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-10;
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Dimension(format!("{rows} x {cols} overflows")))?;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{rows} x {cols} matrix needs {expected} entries, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("entry ({}, {})", pos / cols.max(1), pos % cols.max(1))));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {c}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    /// Builds a matrix from columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let c = columns.len();
        let r = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != r {
                return Err(Error::Dimension(format!("column {j} has {} entries, expected {r}", col.len())));
            }
            for (i, v) in col.iter().enumerate() {
                m.data[i * c + j] = *v;
            }
        }
        Self::new(r, c, m.data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `X v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Xᵀ v`
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x * vi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn select_columns(&self, cols: &IndexSet) -> Self {
        let idx = cols.as_slice();
        let mut out = Self::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (k, &j) in idx.iter().enumerate() {
                out.data[i * idx.len() + k] = self.get(i, j);
            }
        }
        out
    }

    /// Rows picked in the given order; repeats allowed (bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: rows.len(), cols: self.cols, data }
    }

    /// Principal submatrix `A[idx, idx]`.
    pub fn principal(&self, idx: &IndexSet) -> Self {
        let k = idx.len();
        let mut out = Self::zeros(k, k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * k + b] = self.get(i, j);
            }
        }
        out
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, &x) in sq.iter_mut().zip(self.row(i)) {
                *s += x * x;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn add_diagonal(&mut self, value: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += value;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Finite vector of reals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector entry {pos}")));
        }
        Ok(Self(data))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Strictly increasing set of column positions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(indices: Vec<usize>, bound: usize) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidArgument(format!(
                    "index set must be strictly increasing, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= bound {
                return Err(Error::InvalidArgument(format!("index {last} out of range for {bound} columns")));
            }
        }
        Ok(Self(indices))
    }

    pub fn from_predicate(len: usize, mut keep: impl FnMut(usize) -> bool) -> Self {
        Self((0..len).filter(|&i| keep(i)).collect())
    }

    /// Positions of nonzero entries.
    pub fn support(v: &[f64]) -> Self {
        Self::from_predicate(v.len(), |i| v[i] != 0.0)
    }

    pub fn complement(&self, len: usize) -> Self {
        let mut out = Vec::with_capacity(len.saturating_sub(self.0.len()));
        let mut it = self.0.iter().peekable();
        for i in 0..len {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        Self(out)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `Σ = XᵀX`; the upper triangle is computed and mirrored so the result is exactly symmetric.
pub fn gram(x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.is_empty() {
        return Err(Error::Dimension("gram of an empty matrix".into()));
    }
    let p = x.cols();
    p.checked_mul(p).ok_or_else(|| Error::Dimension(format!("{p} x {p} gram overflows")))?;
    let mut g = DenseMatrix::zeros(p, p);
    for i in 0..x.rows() {
        let r = x.row(i);
        for a in 0..p {
            let ra = r[a];
            if ra == 0.0 {
                continue;
            }
            let dst = &mut g.data[a * p..(a + 1) * p];
            for b in a..p {
                dst[b] += ra * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g.data[a * p + b] = g.data[b * p + a];
        }
    }
    Ok(g)
}

enum PowerOutcome {
    Converged(f64),
    Stagnant,
}

fn power_iteration(x: &DenseMatrix, start: Vec<f64>, tol: f64, max_iter: usize) -> Result<PowerOutcome> {
    let mut v = start;
    let nv = norm2(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let mut prev = f64::NAN;
    let mut flat_steps = 0;
    for _ in 0..max_iter {
        let w = x.t_matvec(&x.matvec(&v));
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(PowerOutcome::Stagnant);
        }
        let lam = dot(&v, &w);
        let resid = w.iter().zip(&v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        if resid <= tol * lam {
            return Ok(PowerOutcome::Converged(lam));
        }
        // Rayleigh quotients of power iteration increase monotonically; a flat
        // sequence means the remaining residual lives in a near-degenerate
        // top eigenspace and no longer moves the eigenvalue.
        if (lam - prev).abs() <= 1e-2 * tol * lam {
            flat_steps += 1;
            if flat_steps >= 3 {
                return Ok(PowerOutcome::Converged(lam));
            }
        } else {
            flat_steps = 0;
        }
        prev = lam;
        v = w.into_iter().map(|e| e / nw).collect();
    }
    Err(Error::NonConvergence { what: "spectral norm power iteration", iterations: max_iter })
}

fn pseudorandom_start(p: usize) -> Vec<f64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    (0..p)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Largest singular value `‖X‖₂`, by power iteration on `XᵀX`.
///
/// Runs from the normalized all-ones vector and from a fixed pseudorandom
/// vector and keeps the larger eigenvalue, so a start vector orthogonal to the
/// dominant eigenvector cannot lock onto a smaller one.
pub fn spectral_norm(x: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Dimension("spectral norm of an empty matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if x.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let p = x.cols();
    let mut best: f64 = 0.0;
    for start in [vec![1.0; p], pseudorandom_start(p)] {
        match power_iteration(x, start, tol, max_iter)? {
            PowerOutcome::Converged(lam) => best = best.max(lam),
            PowerOutcome::Stagnant => {}
        }
    }
    if best == 0.0 {
        // Both starts annihilated by a nonzero matrix: deterministic fallback over unit vectors.
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            if let PowerOutcome::Converged(lam) = power_iteration(x, e, tol, max_iter)? {
                best = best.max(lam);
            }
        }
    }
    Ok(best.sqrt())
}

pub fn spectral_norm_default(x: &DenseMatrix) -> Result<f64> {
    spectral_norm(x, DEFAULT_SPECTRAL_TOL, DEFAULT_SPECTRAL_MAX_ITER)
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension(format!("cholesky needs a square matrix, got {}x{}", n, a.cols())));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * n + k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }

    /// Lower factor as a dense matrix.
    pub fn lower(&self) -> DenseMatrix {
        DenseMatrix { rows: self.n, cols: self.n, data: self.l.clone() }
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (Cholesky plus one refinement step).
pub fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Result<DenseVector> {
    if a.rows() != b.len() {
        return Err(Error::Dimension(format!("{}x{} system with rhs of length {}", a.rows(), a.cols(), b.len())));
    }
    let chol = Cholesky::factor(a)?;
    let mut x = chol.solve(b);
    let r = sub(b, &a.matvec(&x));
    let dx = chol.solve(&r);
    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
    DenseVector::new(x)
}

/// Rescales every column to ℓ2-norm `target`; returns the rescaled matrix and
/// per-column factors `f` with `X = X' · diag(f)`.
pub fn normalize_columns(x: &DenseMatrix, target: f64) -> Result<(DenseMatrix, Vec<f64>)> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("normalization target must be positive, got {target}")));
    }
    let norms = x.column_norms();
    if let Some(index) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn { index });
    }
    let factors: Vec<f64> = norms.iter().map(|n| n / target).collect();
    Ok((scale_columns(x, &factors), factors))
}

/// Divides column `j` by `factors[j]`.
pub fn scale_columns(x: &DenseMatrix, factors: &[f64]) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..x.rows() {
        for (j, f) in factors.iter().enumerate() {
            out.data[i * x.cols + j] /= f;
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &DenseMatrix, tol: f64) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension(format!("eigenvalues need a square matrix, got {}x{}", n, a.cols())));
    }
    let mut m = a.data.clone();
    let frob = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Ok(vec![0.0; n]);
    }
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= tol * frob {
            let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
            ev.sort_by(f64::total_cmp);
            return Ok(ev);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(Error::NonConvergence { what: "Jacobi eigenvalue sweeps", iterations: MAX_SWEEPS })
}
