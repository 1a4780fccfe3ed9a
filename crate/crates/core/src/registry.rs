//! Built-in test problems, addressable by name.

use thiserror::Error;

use crate::linalg::{lu_solve, DenseMatrix, DenseVector, LinalgError};
use crate::problem::NonlinearProblem;

/// Names accepted by [`resolve`].
pub const PROBLEM_NAMES: [&str; 3] = ["example3d", "academic", "affine"];

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown problem {0:?} (known: example3d, academic, affine)")]
    Unknown(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `F(x, y, z) = (x, y² + y, eᶻ − 1)` on the open max-norm ball `‖w‖ < 1`.
pub fn example_3d() -> NonlinearProblem {
    example_3d_with_radius(1.0)
}

/// [`example_3d`] on the open max-norm ball of radius `r_tilde`.
pub fn example_3d_with_radius(r_tilde: f64) -> NonlinearProblem {
    NonlinearProblem::new("example3d", 3, |w: &DenseVector| {
        DenseVector::new(vec![w[0], w[1] * w[1] + w[1], w[2].exp() - 1.0])
    })
    .with_jacobian(|w: &DenseVector| {
        DenseMatrix::from_diagonal(&[1.0, 2.0 * w[1] + 1.0, w[2].exp()])
    })
    .with_domain(move |w: &DenseVector| w.max_norm() < r_tilde)
    .with_solution(DenseVector::zeros(3))
    .expect("origin is a root")
}

/// The two-dimensional ε-family
///
/// ```text
/// (2x − x²/ε) + (y − y²/(2ε)) = 0
///                       x + y = 0
/// ```
///
/// with root `(0, 0)`. Its Jacobian is singular at `(ε, ε)`, and shrinking
/// `ε` worsens the conditioning near the root.
///
/// # Panics
///
/// If `epsilon` is zero or not finite.
pub fn academic_system(epsilon: f64) -> NonlinearProblem {
    assert!(
        epsilon != 0.0 && epsilon.is_finite(),
        "epsilon must be finite and non-zero"
    );
    let eps = epsilon;
    NonlinearProblem::new(format!("academic(eps={eps})"), 2, move |v: &DenseVector| {
        let (x, y) = (v[0], v[1]);
        DenseVector::new(vec![
            (2.0 * x - x * x / eps) + (y - y * y / (2.0 * eps)),
            x + y,
        ])
    })
    .with_jacobian(move |v: &DenseVector| {
        DenseMatrix::from_rows(&[
            vec![2.0 - 2.0 * v[0] / eps, 1.0 - v[1] / eps],
            vec![1.0, 1.0],
        ])
    })
    .with_solution(DenseVector::zeros(2))
    .expect("origin is a root")
}

/// `F(x) = A·x − b`, with the root computed by LU.
pub fn affine_problem(a: DenseMatrix, b: DenseVector) -> Result<NonlinearProblem, LinalgError> {
    if a.dim() != b.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    let root = lu_solve(&a, &b)?;
    let jac = a.clone();
    let problem =
        NonlinearProblem::new("affine", a.dim(), move |x: &DenseVector| &a.mul_vec(x) - &b)
            .with_jacobian(move |_| jac.clone());
    // LU roots of badly scaled systems can exceed the absolute residual bound.
    Ok(match problem.clone().with_solution(root.clone()) {
        Ok(p) => p,
        Err(_) => problem.with_trusted_solution(root),
    })
}

/// The default affine instance: `A = [[2, 1], [1, 1]]`, `b = (3, 2)`, root `(1, 1)`.
pub fn default_affine() -> NonlinearProblem {
    affine_problem(
        DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]),
        DenseVector::new(vec![3.0, 2.0]),
    )
    .expect("default affine matrix is invertible")
}

/// Parameters understood by [`resolve`].
#[derive(Debug, Clone, Default)]
pub struct ProblemParams {
    pub epsilon: Option<f64>,
    pub r_tilde: Option<f64>,
    pub matrix: Option<DenseMatrix>,
    pub rhs: Option<DenseVector>,
}

/// Looks a problem up by registry name.
pub fn resolve(name: &str, params: &ProblemParams) -> Result<NonlinearProblem, RegistryError> {
    match name {
        "example3d" => {
            let r = params.r_tilde.unwrap_or(1.0);
            if r.is_nan() || r <= 0.0 {
                return Err(RegistryError::InvalidParameter(format!(
                    "rtilde must be positive, got {r}"
                )));
            }
            Ok(example_3d_with_radius(r))
        }
        "academic" => {
            let eps = params.epsilon.unwrap_or(3.0);
            if eps == 0.0 || !eps.is_finite() {
                return Err(RegistryError::InvalidParameter(format!(
                    "epsilon must be finite and non-zero, got {eps}"
                )));
            }
            Ok(academic_system(eps))
        }
        "affine" => match (&params.matrix, &params.rhs) {
            (None, None) => Ok(default_affine()),
            (Some(a), Some(b)) => Ok(affine_problem(a.clone(), b.clone())?),
            (Some(a), None) => Ok(affine_problem(a.clone(), DenseVector::zeros(a.dim()))?),
            (None, Some(_)) => Err(RegistryError::InvalidParameter(
                "affine right-hand side given without a matrix".into(),
            )),
        },
        other => Err(RegistryError::Unknown(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_slice(x)
    }

    #[test]
    fn example_3d_values() {
        let p = example_3d();
        assert_eq!(p.eval(&v(&[0.0, 0.0, 0.0])).unwrap(), v(&[0.0, 0.0, 0.0]));
        // (1, 1, 0) lies on the boundary of the default domain
        let wide = example_3d_with_radius(2.0);
        assert_eq!(
            wide.eval(&v(&[1.0, 1.0, 0.0])).unwrap(),
            v(&[1.0, 2.0, 0.0])
        );
        assert!(p.eval(&v(&[1.0, 1.0, 0.0])).is_err());
        let j = p.jacobian(&v(&[0.0, 0.0, 0.0])).unwrap().unwrap();
        assert_eq!(j, DenseMatrix::identity(3));
    }

    #[test]
    fn academic_values() {
        let p = academic_system(1.0);
        assert_eq!(p.eval(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        let fx = p.eval(&v(&[-1.0, 1.0])).unwrap();
        // independent evaluation: (2x − x²) + (y − y²/2) at (−1, 1)
        let direct = (-2.0 - 1.0) + (1.0 - 0.5);
        assert_eq!(fx, v(&[direct, 0.0]));
        assert_eq!(fx, v(&[-2.5, 0.0]));

        for eps in [3.0, 2.0, 1.0, 0.1] {
            let p = academic_system(eps);
            let j = p.jacobian(&v(&[eps, eps])).unwrap().unwrap();
            assert!(
                (&j - &DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]])).max_norm()
                    < 1e-15
            );
            assert!(crate::linalg::invert(&j).is_err());
        }
    }

    #[test]
    #[should_panic]
    fn academic_rejects_zero_epsilon() {
        academic_system(0.0);
    }

    #[test]
    fn affine_roots() {
        let p = affine_problem(DenseMatrix::identity(2), v(&[0.0, 0.0])).unwrap();
        assert_eq!(p.known_solution().unwrap(), &v(&[0.0, 0.0]));
        let p = affine_problem(DenseMatrix::identity(2), v(&[1.0, 2.0])).unwrap();
        assert_eq!(p.known_solution().unwrap(), &v(&[1.0, 2.0]));
        let root = default_affine().known_solution().unwrap().clone();
        assert!((&root - &v(&[1.0, 1.0])).max_norm() <= 1e-14);

        let singular = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(
            affine_problem(singular, v(&[1.0, 1.0])),
            Err(LinalgError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn resolve_by_name() {
        for name in PROBLEM_NAMES {
            let p = resolve(name, &ProblemParams::default()).unwrap();
            let x = p.known_solution().unwrap();
            assert!(p.eval(x).unwrap().max_norm() <= 1e-12);
        }
        assert!(matches!(
            resolve("nope", &ProblemParams::default()),
            Err(RegistryError::Unknown(_))
        ));
        let bad = ProblemParams {
            epsilon: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(
            resolve("academic", &bad),
            Err(RegistryError::InvalidParameter(_))
        ));
    }
}
