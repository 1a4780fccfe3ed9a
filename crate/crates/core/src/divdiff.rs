//! First-order divided differences `[u, v; F]`.
//!
//! Column `j` is built from two consecutive points of the staircase
//!
//! ```text
//! p₀ = v,  pⱼ = (u₁, …, uⱼ, vⱼ₊₁, …, vₘ),  pₘ = u
//! ```
//!
//! as `(F(pⱼ) − F(pⱼ₋₁)) / (uⱼ − vⱼ)`, which costs `m + 1` evaluations of `F`
//! and telescopes to `[u, v; F](u − v) = F(u) − F(v)` exactly in real
//! arithmetic. When `uⱼ` and `vⱼ` coincide the column is replaced by the
//! partial derivative at the staircase point, so `[x, x; F] = F′(x)`.

use crate::linalg::{DenseMatrix, DenseVector};
use crate::problem::{NonlinearProblem, ProblemError};

/// `|uⱼ − vⱼ| ≤ COINCIDENCE_TOL · (1 + |uⱼ|)` switches column `j` to the
/// derivative fallback.
pub const COINCIDENCE_TOL: f64 = 1e-12;

fn coincide(a: f64, b: f64) -> bool {
    (a - b).abs() <= COINCIDENCE_TOL * (1.0 + a.abs())
}

/// Central-difference step for coordinate value `x`: `ε^{1/3}·(1 + |x|)`.
pub fn central_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

fn derivative_column(
    problem: &NonlinearProblem,
    at: &DenseVector,
    j: usize,
) -> Result<DenseVector, ProblemError> {
    if let Some(jac) = problem.jacobian(at) {
        return Ok(jac?.column(j));
    }
    let h = central_step(at[j]);
    let mut plus = at.clone();
    let mut minus = at.clone();
    plus[j] += h;
    minus[j] -= h;
    // the actual spacing after rounding
    let width = plus[j] - minus[j];
    let fp = problem.eval(&plus)?;
    let fm = problem.eval(&minus)?;
    Ok((&fp - &fm).scale(1.0 / width))
}

/// Builds `[u, v; F]` together with `F(u)` and `F(v)`.
pub fn divided_difference_with_values(
    problem: &NonlinearProblem,
    u: &DenseVector,
    v: &DenseVector,
) -> Result<(DenseMatrix, DenseVector, DenseVector), ProblemError> {
    let m = problem.dim();
    for p in [u, v] {
        if p.len() != m {
            return Err(ProblemError::DimensionMismatch {
                expected: m,
                found: p.len(),
            });
        }
    }

    let mut point = v.clone();
    let mut prev = problem.eval(&point)?;
    let fv = prev.clone();
    let mut dd = DenseMatrix::zeros(m);

    for j in 0..m {
        point[j] = u[j];
        let next = problem.eval(&point)?;
        let col = if coincide(u[j], v[j]) {
            derivative_column(problem, &point, j)?
        } else {
            (&next - &prev).scale(1.0 / (u[j] - v[j]))
        };
        dd.set_column(j, &col);
        prev = next;
    }
    Ok((dd, prev, fv))
}

/// `[u, v; F]`.
pub fn divided_difference(
    problem: &NonlinearProblem,
    u: &DenseVector,
    v: &DenseVector,
) -> Result<DenseMatrix, ProblemError> {
    divided_difference_with_values(problem, u, v).map(|(dd, _, _)| dd)
}

/// `‖[u, v; F](u − v) − (F(u) − F(v))‖`.
pub fn secant_defect(
    problem: &NonlinearProblem,
    u: &DenseVector,
    v: &DenseVector,
) -> Result<f64, ProblemError> {
    let (dd, fu, fv) = divided_difference_with_values(problem, u, v)?;
    let lhs = dd.mul_vec(&(u - v));
    Ok((&lhs - &(&fu - &fv)).max_norm())
}
