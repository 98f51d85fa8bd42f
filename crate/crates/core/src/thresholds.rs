//! Thresholding rules `Θ(·; λ)`, their induced penalties, and the numeric
//! machinery (penalty construction, brute-force prox) used to cross-check them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_SCAD_A: f64 = 3.7;
/// Simpson nodes for [`ThresholdRule::construct_penalty_numeric`].
pub const DEFAULT_QUADRATURE_NODES: usize = 4097;
/// Grid points for [`ThresholdRule::prox_oracle`].
pub const DEFAULT_PROX_GRID: usize = 20_001;
const INVERSE_TOL: f64 = 1e-12;

/// A univariate thresholding rule. Every variant is odd, shrinking and
/// nondecreasing on the positive half-line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Soft,
    Hard,
    Scad { a: f64 },
    Ridge,
    /// Zero below `λ`, ridge shrinkage `t/(1+η)` at or above it.
    Hybrid { eta: f64 },
    TransformedL1 { b: f64 },
}

/// The generalized sign set `S̃gn(u; λ)`, stored as a closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedSign {
    pub lower: f64,
    pub upper: f64,
    /// Set when `u` is outside the range of `Θ` and the `{0}` fallback applied.
    pub fallback: bool,
}

impl GeneralizedSign {
    fn point(v: f64) -> Self {
        Self { lower: v, upper: v, fallback: false }
    }

    fn unit_interval() -> Self {
        Self { lower: -1.0, upper: 1.0, fallback: false }
    }

    fn fallback_zero() -> Self {
        Self { lower: 0.0, upper: 0.0, fallback: true }
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, s: f64) -> bool {
        self.lower <= s && s <= self.upper
    }

    pub fn clamp(&self, s: f64) -> f64 {
        s.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEvaluation {
    pub value: f64,
    pub rule: ThresholdRule,
    pub lambda: f64,
}

#[inline]
fn soft(t: f64, lambda: f64) -> f64 {
    t.signum() * (t.abs() - lambda).max(0.0)
}

impl ThresholdRule {
    pub fn scad(a: f64) -> Result<Self> {
        if !(a > 2.0) || !a.is_finite() {
            return Err(Error::InvalidArgument(format!("SCAD parameter a must exceed 2, got {a}")));
        }
        Ok(Self::Scad { a })
    }

    pub fn hybrid(eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("hybrid eta must be nonnegative, got {eta}")));
        }
        Ok(Self::Hybrid { eta })
    }

    pub fn transformed_l1(b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("transformed-l1 b must be positive, got {b}")));
        }
        Ok(Self::TransformedL1 { b })
    }

    /// Re-checks parameter invariants (useful after deserializing or FFI input).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Scad { a } => Self::scad(a).map(|_| ()),
            Self::Hybrid { eta } => Self::hybrid(eta).map(|_| ()),
            Self::TransformedL1 { b } => Self::transformed_l1(b).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Soft => "soft",
            Self::Hard => "hard",
            Self::Scad { .. } => "scad",
            Self::Ridge => "ridge",
            Self::Hybrid { .. } => "hybrid",
            Self::TransformedL1 { .. } => "tl1",
        }
    }

    /// `Θ(t; λ)`.
    pub fn apply(&self, t: f64, lambda: f64) -> f64 {
        match *self {
            Self::Soft => soft(t, lambda),
            Self::Hard => {
                if t.abs() > lambda {
                    t
                } else {
                    0.0
                }
            }
            Self::Scad { a } => {
                let at = t.abs();
                if at <= 2.0 * lambda {
                    soft(t, lambda)
                } else if at <= a * lambda {
                    ((a - 1.0) * t - t.signum() * a * lambda) / (a - 2.0)
                } else {
                    t
                }
            }
            Self::Ridge => t / (1.0 + lambda),
            Self::Hybrid { eta } => {
                if t.abs() < lambda {
                    0.0
                } else {
                    t / (1.0 + eta)
                }
            }
            Self::TransformedL1 { b } => t.signum() * tl1_positive_prox(t.abs(), lambda, b),
        }
    }

    /// `ψ(t; λ) = t − Θ(t; λ)`.
    pub fn psi(&self, t: f64, lambda: f64) -> f64 {
        t - self.apply(t, lambda)
    }

    /// Closed-form penalty `P(θ; λ)`, the one produced by the three-step construction.
    pub fn penalty(&self, theta: f64, lambda: f64) -> f64 {
        let x = theta.abs();
        match *self {
            Self::Soft => lambda * x,
            Self::Hard => {
                if x < lambda {
                    lambda * lambda / 2.0 - (x - lambda).powi(2) / 2.0
                } else {
                    lambda * lambda / 2.0
                }
            }
            Self::Scad { a } => {
                if x <= lambda {
                    lambda * x
                } else if x <= a * lambda {
                    (2.0 * a * lambda * x - x * x - lambda * lambda) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * lambda * lambda / 2.0
                }
            }
            Self::Ridge => lambda * x * x / 2.0,
            Self::Hybrid { eta } => {
                if x < lambda / (1.0 + eta) {
                    -x * x / 2.0 + lambda * x
                } else {
                    eta * x * x / 2.0 + lambda * lambda / (2.0 * (1.0 + eta))
                }
            }
            Self::TransformedL1 { b } => lambda * b * x / (1.0 + b * x),
        }
    }

    pub fn evaluate_penalty(&self, theta: f64, lambda: f64) -> PenaltyEvaluation {
        PenaltyEvaluation { value: self.penalty(theta, lambda), rule: *self, lambda }
    }

    /// `Θ⁻¹(u; λ) = sup{t : Θ(t; λ) ≤ u}` for `u ≥ 0`, by monotone bisection.
    pub fn inverse(&self, u: f64, lambda: f64) -> Result<f64> {
        let u = u.abs();
        let mut lo = 0.0;
        let mut hi = (2.0 * u).max(1.0) + lambda;
        let mut expansions = 0;
        while self.apply(hi, lambda) <= u {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 200 || !hi.is_finite() {
                return Err(Error::Bracketing(format!(
                    "{self}: Θ(t) stays below {u} for all tested t (non-monotone or unbounded rule)"
                )));
            }
        }
        while hi - lo > INVERSE_TOL * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.apply(mid, lambda) <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Penalty by the three-step construction: `s(u) = Θ⁻¹(u) − u`, integrated
    /// from 0 to `|θ|` with composite Simpson on `nodes` points.
    pub fn construct_penalty_numeric(&self, theta: f64, lambda: f64, nodes: usize) -> Result<f64> {
        let x = theta.abs();
        if x == 0.0 {
            return Ok(0.0);
        }
        let n = if nodes < 3 { 3 } else if nodes.is_multiple_of(2) { nodes + 1 } else { nodes };
        let h = x / (n - 1) as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let u = k as f64 * h;
            let s = self.inverse(u, lambda)? - u;
            let w = if k == 0 || k == n - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * s;
        }
        Ok(acc * h / 3.0)
    }

    /// Brute-force minimizer of `(t − θ)²/2 + P(θ; λ)`: dense grid scan over
    /// `[−|t|−1, |t|+1]`, then golden-section refinement of the best grid cells.
    pub fn prox_oracle(&self, t: f64, lambda: f64, grid: usize) -> f64 {
        let f = |theta: f64| 0.5 * (t - theta).powi(2) + self.penalty(theta, lambda);
        let half = t.abs() + 1.0;
        let n = grid.max(3) | 1;
        let h = 2.0 * half / (n - 1) as f64;
        let values: Vec<f64> = (0..n).map(|k| f(-half + k as f64 * h)).collect();
        let mut minima: Vec<usize> = (0..n)
            .filter(|&k| (k == 0 || values[k] <= values[k - 1]) && (k == n - 1 || values[k] <= values[k + 1]))
            .collect();
        minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        minima.truncate(4);

        let mut best = 0.0;
        let mut best_val = f(0.0);
        for k in minima {
            let lo = -half + k.saturating_sub(1) as f64 * h;
            let hi = -half + (k + 1).min(n - 1) as f64 * h;
            let cand = golden_section(&f, lo, hi, 1e-13);
            let v = f(cand);
            if v < best_val {
                best = cand;
                best_val = v;
            }
        }
        best
    }

    /// `τ(λ)`: `Θ(t) = 0` for `|t| < τ` and `Θ(t) ≠ 0` for `|t| > τ`.
    pub fn threshold_value(&self, lambda: f64) -> f64 {
        match *self {
            Self::Soft | Self::Hard | Self::Scad { .. } | Self::Hybrid { .. } => lambda,
            Self::Ridge => 0.0,
            Self::TransformedL1 { .. } => {
                if lambda == 0.0 {
                    return 0.0;
                }
                let mut lo = 0.0;
                let mut hi = (2.0 * lambda).sqrt() + 1.0;
                while self.apply(hi, lambda) == 0.0 {
                    lo = hi;
                    hi *= 2.0;
                }
                while hi - lo > INVERSE_TOL * hi {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.apply(mid, lambda) == 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Whether [`threshold_value`](Self::threshold_value) is a closed form rather than a numeric search.
    pub fn threshold_value_is_closed_form(&self) -> bool {
        !matches!(self, Self::TransformedL1 { .. })
    }

    /// `S̃gn(u; λ) = {s : Θ(u + τ s; λ) = u}`, or `{0}` when `u` is outside the range of `Θ`.
    pub fn generalized_sign(&self, u: f64, lambda: f64) -> GeneralizedSign {
        if u == 0.0 {
            return GeneralizedSign::unit_interval();
        }
        let sign = u.signum();
        let au = u.abs();
        match *self {
            Self::Soft => GeneralizedSign::point(sign),
            Self::Hard => {
                if au > lambda {
                    GeneralizedSign::point(0.0)
                } else {
                    GeneralizedSign::fallback_zero()
                }
            }
            Self::Hybrid { eta } => {
                if lambda == 0.0 {
                    return GeneralizedSign::fallback_zero();
                }
                if au < lambda / (1.0 + eta) {
                    GeneralizedSign::fallback_zero()
                } else {
                    GeneralizedSign::point(eta / lambda * u)
                }
            }
            Self::Scad { a } => {
                if lambda == 0.0 {
                    return GeneralizedSign::fallback_zero();
                }
                let s = if au <= lambda {
                    1.0
                } else if au <= a * lambda {
                    (a * lambda - au) / ((a - 1.0) * lambda)
                } else {
                    0.0
                };
                GeneralizedSign::point(sign * s)
            }
            Self::Ridge => {
                // τ = 0: Θ(u) = u only when λ = 0.
                if lambda == 0.0 {
                    GeneralizedSign::unit_interval()
                } else {
                    GeneralizedSign::fallback_zero()
                }
            }
            Self::TransformedL1 { .. } => {
                let tau = self.threshold_value(lambda);
                let Ok(t) = self.inverse(au, lambda) else {
                    return GeneralizedSign::fallback_zero();
                };
                if tau == 0.0 || (self.apply(t, lambda) - au).abs() > 1e-6 * (1.0 + au) {
                    return GeneralizedSign::fallback_zero();
                }
                GeneralizedSign::point(sign * (t - au) / tau)
            }
        }
    }

    /// Scalar `h` with `H = h·I` in the bounded curvature condition.
    ///
    /// Only the transformed-ℓ1 rule depends on `λ`; its value is a numeric
    /// bound on the steepest descent of `s(u) = P′(u)`.
    pub fn bcc_curvature(&self, lambda: f64) -> f64 {
        match *self {
            Self::Soft | Self::Ridge => 0.0,
            Self::Hard | Self::Hybrid { .. } => 1.0,
            Self::Scad { a } => 1.0 / (a - 1.0),
            Self::TransformedL1 { b } => {
                let s = |u: f64| lambda * b / (1.0 + b * u).powi(2);
                let n = 10_001;
                let h = 10.0 / b / (n - 1) as f64;
                (0..n - 1)
                    .map(|k| {
                        let u = k as f64 * h;
                        -(s(u + h) - s(u)) / h
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Constant `c` of the hard-thresholding family (`Θ(t) = t` for `|t| > cτ`).
    pub fn hard_family_constant(&self) -> Option<f64> {
        match *self {
            Self::Hard => Some(1.0),
            Self::Scad { a } => Some(a),
            Self::Hybrid { eta: 0.0 } => Some(1.0),
            _ => None,
        }
    }

    /// The rule used by the `k`-scaled iteration: the ridge part of the hybrid
    /// rule is divided by `k²` along with `λ`, which keeps its fixed points the
    /// partial-ridge solutions of the unscaled problem.
    pub fn scaled(&self, k2: f64) -> Self {
        match *self {
            Self::Hybrid { eta } => Self::Hybrid { eta: eta / k2 },
            other => other,
        }
    }
}

/// Transformed-ℓ1 prox for `t ≥ 0`: minimizes `(t − θ)²/2 + λbθ/(1 + bθ)` over `θ ∈ [0, t]`.
fn tl1_positive_prox(t: f64, lambda: f64, b: f64) -> f64 {
    if t == 0.0 || lambda == 0.0 {
        return t;
    }
    let obj = |th: f64| 0.5 * (t - th).powi(2) + lambda * b * th / (1.0 + b * th);
    // Derivative g(θ) = θ − t + λb/(1+bθ)² is convex; a local minimum is on its increasing branch.
    let g = |th: f64| th - t + lambda * b / (1.0 + b * th).powi(2);
    let turn = (((2.0 * lambda * b * b).cbrt() - 1.0) / b).max(0.0);
    if turn >= t || g(turn) >= 0.0 {
        return if g(0.0) >= 0.0 || obj(t.min(turn)) >= obj(0.0) { 0.0 } else { t.min(turn) };
    }
    let (mut lo, mut hi) = (turn, t);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * t.max(1.0) {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    if obj(root) < obj(0.0) {
        root
    } else {
        0.0
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [a, b, mid, c, d].into_iter().min_by(|x, y| f(*x).total_cmp(&f(*y))).unwrap_or(mid)
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Soft => write!(f, "soft"),
            Self::Hard => write!(f, "hard"),
            Self::Scad { a } => write!(f, "scad:{a:?}"),
            Self::Ridge => write!(f, "ridge"),
            Self::Hybrid { eta } => write!(f, "hybrid:{eta:?}"),
            Self::TransformedL1 { b } => write!(f, "tl1:{b:?}"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let num = |p: Option<&str>| -> Result<Option<f64>> {
            p.map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad rule parameter {v:?} in {s:?}")))
            })
            .transpose()
        };
        let no_param = |rule: Self| {
            if param.is_some() {
                Err(Error::InvalidArgument(format!("rule {name:?} takes no parameter")))
            } else {
                Ok(rule)
            }
        };
        match name.to_ascii_lowercase().as_str() {
            "soft" | "lasso" => no_param(Self::Soft),
            "hard" => no_param(Self::Hard),
            "ridge" => no_param(Self::Ridge),
            "scad" => Self::scad(num(param)?.unwrap_or(DEFAULT_SCAD_A)),
            "hybrid" => match num(param)? {
                Some(eta) => Self::hybrid(eta),
                None => Err(Error::InvalidArgument("hybrid rule needs eta, e.g. \"hybrid:0.5\"".into())),
            },
            "tl1" => match num(param)? {
                Some(b) => Self::transformed_l1(b),
                None => Err(Error::InvalidArgument("tl1 rule needs b, e.g. \"tl1:2.0\"".into())),
            },
            _ => Err(Error::InvalidArgument(format!("unknown thresholding rule {s:?}"))),
        }
    }
}

impl Serialize for ThresholdRule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThresholdRule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
