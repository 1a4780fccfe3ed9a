//! Local convergence theory for Moser-Steffensen: majorizing scalar
//! sequences, the sufficient conditions on the starting ball, a radius
//! search, and empirical order / constant estimators.

use serde::Serialize;
use thiserror::Error;

use crate::divdiff::divided_difference;
use crate::linalg::DenseVector;
use crate::problem::{NonlinearProblem, ProblemError};
use crate::solver::IterationTrace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvergenceError {
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("need at least {needed} errors above the precision floor, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("problem has no known solution")]
    MissingSolution,
    #[error("problem has no analytic Jacobian")]
    MissingJacobian,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Constants of the local analysis around a root `x*`.
///
/// * `m`: bound on `‖F′(x*)‖`
/// * `k`: centred Lipschitz constant, `‖[x, y; F] − F′(x*)‖ ≤ k(‖x − x*‖ + ‖y − x*‖)`
/// * `beta`: `‖B₀‖`
/// * `delta`: `‖I − B₀F′(x*)‖`
/// * `r`: radius of the starting ball, `r_tilde`: radius of the ball where the bounds hold
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceConstants {
    pub m: f64,
    pub k: f64,
    pub beta: f64,
    pub delta: f64,
    pub r: f64,
    pub r_tilde: f64,
}

impl ConvergenceConstants {
    pub fn new(
        m: f64,
        k: f64,
        beta: f64,
        delta: f64,
        r: f64,
        r_tilde: f64,
    ) -> Result<Self, ConvergenceError> {
        let c = Self {
            m,
            k,
            beta,
            delta,
            r,
            r_tilde,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConvergenceError> {
        let fields = [
            ("M", self.m),
            ("k", self.k),
            ("beta", self.beta),
            ("delta", self.delta),
            ("r", self.r),
            ("r_tilde", self.r_tilde),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ConvergenceError::InvalidConstants(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.delta >= 1.0 {
            return Err(ConvergenceError::InvalidConstants(format!(
                "delta must be below 1, got {}",
                self.delta
            )));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("r", self.r),
            ("r_tilde", self.r_tilde),
        ] {
            if v == 0.0 {
                return Err(ConvergenceError::InvalidConstants(format!(
                    "{name} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn with_radius(self, r: f64) -> Self {
        Self { r, ..self }
    }
}

/// The majorizing sequences. `alpha`, `alpha_tilde` and `delta` hold
/// `n_terms + 1` entries, `beta` and `d` hold `n_terms`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarSequences {
    pub alpha: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub d: Vec<f64>,
}

impl ScalarSequences {
    /// Whether `alpha`, `alpha_tilde`, `delta` and `d` all decrease strictly.
    pub fn strictly_decreasing(&self) -> bool {
        [&self.alpha, &self.alpha_tilde, &self.delta, &self.d]
            .iter()
            .all(|s| s.windows(2).all(|w| w[1] < w[0]))
    }
}

/// Starting from `α₀ = r`, `ᾱ₀ = r̃`, `β₀ = β`, `δ₀ = δ`:
///
/// ```text
/// αₙ₊₁ = (δₙ + kβₙαₙ)αₙ
/// ᾱₙ₊₁ = (1 + M + kαₙ₊₁)αₙ₊₁
/// δₙ₊₁ = δₙ² + kMβₙ²(αₙ₊₁ + ᾱₙ₊₁)
/// dₙ   = δₙ + kβₙ(αₙ₊₁ + ᾱₙ₊₁)
/// βₙ₊₁ = (1 + dₙ)βₙ
/// ```
///
/// # Panics
///
/// If `n_terms` is zero.
pub fn generate_sequences(c: &ConvergenceConstants, n_terms: usize) -> ScalarSequences {
    assert!(n_terms >= 1, "n_terms must be positive");
    let mut s = ScalarSequences {
        alpha: vec![c.r],
        alpha_tilde: vec![c.r_tilde],
        beta: vec![c.beta],
        delta: vec![c.delta],
        d: Vec::with_capacity(n_terms),
    };
    for n in 0..n_terms {
        let (a, b, dl) = (s.alpha[n], s.beta[n], s.delta[n]);
        let a1 = (dl + c.k * b * a) * a;
        let at1 = (1.0 + c.m + c.k * a1) * a1;
        s.alpha.push(a1);
        s.alpha_tilde.push(at1);
        s.delta.push(dl * dl + c.k * c.m * b * b * (a1 + at1));
        let d = dl + c.k * b * (a1 + at1);
        s.d.push(d);
        if n + 1 < n_terms {
            s.beta.push((1.0 + d) * b);
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `(1 + M + kr)r < r̃`
    pub cond1: bool,
    /// `δ₁ < δ₀`
    pub cond2: bool,
    /// `(1 + d₀)²(δ₀ + kβα₀) < 1`
    pub cond3: bool,
    /// `(1 + M + kr)r`
    pub cond1_lhs: f64,
    pub alpha1: f64,
    pub alpha_tilde1: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub d0: f64,
    /// `1 − (1 + d₀)²(δ₀ + kβα₀)`
    pub cond3_margin: f64,
    /// `1 − (1 + δ)²δ`; a feasible radius exists only when positive.
    pub existence_margin: f64,
    /// `δ₀ + kβα₀ < 1`
    pub contraction_bound: bool,
    /// `(1 + d₀)(δ₀ + kβα₀) < 1`
    pub scaled_contraction_bound: bool,
    /// `L = δ + kβr`, the per-step error contraction factor.
    pub contraction_factor: f64,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.cond1 && self.cond2 && self.cond3
    }
}

pub fn check_conditions(c: &ConvergenceConstants) -> ConditionReport {
    let s = generate_sequences(c, 1);
    let contraction = c.delta + c.k * c.beta * c.r;
    let cond1_lhs = (1.0 + c.m + c.k * c.r) * c.r;
    let d0 = s.d[0];
    let cond3_margin = 1.0 - (1.0 + d0).powi(2) * contraction;
    ConditionReport {
        cond1: cond1_lhs < c.r_tilde,
        cond2: s.delta[1] < s.delta[0],
        cond3: cond3_margin > 0.0,
        cond1_lhs,
        alpha1: s.alpha[1],
        alpha_tilde1: s.alpha_tilde[1],
        delta0: s.delta[0],
        delta1: s.delta[1],
        d0,
        cond3_margin,
        existence_margin: 1.0 - (1.0 + c.delta).powi(2) * c.delta,
        contraction_bound: contraction < 1.0,
        scaled_contraction_bound: (1.0 + d0) * contraction < 1.0,
        contraction_factor: contraction,
    }
}

const RADIUS_BISECTIONS: usize = 200;
/// Bisection stops once the bracket is narrower than this; the returned
/// radius is the feasible end.
pub const RADIUS_TOLERANCE: f64 = 1e-10;

/// Largest `r` (to within [`RADIUS_TOLERANCE`], from below) for which all
/// three conditions hold, or `None` when no positive radius works.
pub fn find_radius(m: f64, k: f64, beta: f64, delta: f64, r_tilde: f64) -> Option<f64> {
    let base = ConvergenceConstants::new(m, k, beta, delta, r_tilde, r_tilde).ok()?;
    // as r → 0 the conditions reduce to these two margins
    if 1.0 - (1.0 + delta).powi(2) * delta <= 0.0 || delta * (1.0 - delta) <= 0.0 {
        return None;
    }
    let holds = |r: f64| check_conditions(&base.with_radius(r)).all_hold();
    let upper = r_tilde.min(r_tilde / (1.0 + m));
    if holds(upper) {
        return Some(upper);
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..RADIUS_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < RADIUS_TOLERANCE {
            break;
        }
    }
    (lo > 0.0).then_some(lo)
}

/// Errors are compared against the floor `1e-16·(1 + ‖x*‖)`.
pub const COC_MIN_ERRORS: usize = 4;

/// Computational order of convergence of a trace. See [`coc_from_errors`].
pub fn estimate_coc(trace: &IterationTrace) -> Result<f64, ConvergenceError> {
    coc_from_errors(&trace.errors(), trace.precision_floor)
}

/// Median of the last three ratios `ρₖ = ln(eₖ₊₁/eₖ) / ln(eₖ/eₖ₋₁)` over the
/// leading run of errors above `floor` (all ratios when there are fewer).
pub fn coc_from_errors(errors: &[f64], floor: f64) -> Result<f64, ConvergenceError> {
    let usable: Vec<f64> = errors
        .iter()
        .copied()
        .take_while(|&e| e > floor && e.is_finite())
        .collect();
    if usable.len() < COC_MIN_ERRORS {
        return Err(ConvergenceError::InsufficientData {
            needed: COC_MIN_ERRORS,
            found: usable.len(),
        });
    }
    let mut rho: Vec<f64> = usable
        .windows(3)
        .map(|w| (w[2] / w[1]).ln() / (w[1] / w[0]).ln())
        .filter(|r| r.is_finite())
        .collect();
    if rho.is_empty() {
        return Err(ConvergenceError::InsufficientData {
            needed: COC_MIN_ERRORS,
            found: 0,
        });
    }
    let tail = rho.split_off(rho.len().saturating_sub(3));
    Ok(median(tail))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sampled estimates of `M` and `k` around a known root. `k` is a maximum over
/// finitely many pairs and therefore bounds the true constant from below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantEstimate {
    pub m: f64,
    pub k: f64,
    /// Pairs that lay inside the domain and contributed to `k`.
    pub pairs_used: usize,
}

impl ConstantEstimate {
    /// Completes the estimate with the `B₀`-dependent constants.
    pub fn into_constants(
        self,
        beta: f64,
        delta: f64,
        r: f64,
        r_tilde: f64,
    ) -> Result<ConvergenceConstants, ConvergenceError> {
        ConvergenceConstants::new(self.m, self.k, beta, delta, r, r_tilde)
    }
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Radical inverse of `index` in `base`, in `(0, 1)` for `index ≥ 1`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut value, mut scale) = (0.0, inv);
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

/// Halton point `index` in `[0, 1)^dim`.
///
/// # Panics
///
/// If `dim` exceeds the number of tabulated prime bases (24).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(
        dim <= PRIMES.len(),
        "Halton sampling supports at most {} dimensions",
        PRIMES.len()
    );
    PRIMES[..dim]
        .iter()
        .map(|&b| radical_inverse(index, b))
        .collect()
}

/// Estimates `M = ‖F′(x*)‖` and the centred Lipschitz constant `k` from
/// `n_samples` Halton pairs `(x, y)` in the max-norm ball `B(x*, r_sample)`.
/// Pairs outside the problem domain are skipped.
pub fn estimate_constants(
    problem: &NonlinearProblem,
    r_sample: f64,
    n_samples: usize,
) -> Result<ConstantEstimate, ConvergenceError> {
    let root = problem
        .known_solution()
        .ok_or(ConvergenceError::MissingSolution)?
        .clone();
    let jac_star = problem
        .jacobian(&root)
        .ok_or(ConvergenceError::MissingJacobian)??;
    if !(r_sample > 0.0 && r_sample.is_finite()) {
        return Err(ConvergenceError::InvalidConstants(format!(
            "sampling radius must be positive, got {r_sample}"
        )));
    }
    let m = problem.dim();
    let mut k: f64 = 0.0;
    let mut pairs_used = 0;
    for index in 1..=n_samples as u64 {
        let h = halton(index, 2 * m);
        let point = |offset: usize| -> DenseVector {
            (0..m)
                .map(|i| root[i] + r_sample * (2.0 * h[offset + i] - 1.0))
                .collect()
        };
        let (x, y) = (point(0), point(m));
        let denom = (&x - &root).max_norm() + (&y - &root).max_norm();
        if denom == 0.0 {
            continue;
        }
        let dd = match divided_difference(problem, &x, &y) {
            Ok(dd) => dd,
            Err(ProblemError::DomainViolation(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        k = k.max((&dd - &jac_star).max_norm() / denom);
        pairs_used += 1;
    }
    Ok(ConstantEstimate {
        m: jac_star.max_norm(),
        k,
        pairs_used,
    })
}
