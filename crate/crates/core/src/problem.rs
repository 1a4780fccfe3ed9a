//! Nonlinear systems `F: Ω ⊆ ℝᵐ → ℝᵐ`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{DenseMatrix, DenseVector};

pub type EvalFn = dyn Fn(&DenseVector) -> DenseVector + Send + Sync;
pub type JacobianFn = dyn Fn(&DenseVector) -> DenseMatrix + Send + Sync;
pub type DomainFn = dyn Fn(&DenseVector) -> bool + Send + Sync;

/// Residual bound a registered solution must satisfy.
pub const SOLUTION_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("point {0:?} lies outside the problem domain")]
    DomainViolation(DenseVector),
    #[error("non-finite evaluation at {0:?}")]
    NonFiniteEvaluation(DenseVector),
    #[error("dimension mismatch: problem has dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("registered solution has residual {0:e} above {SOLUTION_RESIDUAL_TOL:e}")]
    BadSolution(f64),
}

/// An evaluatable map with optional Jacobian, known root and domain test.
///
/// Cloning is cheap; the closures are shared.
#[derive(Clone)]
pub struct NonlinearProblem {
    name: String,
    dim: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacobianFn>>,
    solution: Option<DenseVector>,
    domain: Option<Arc<DomainFn>>,
}

impl NonlinearProblem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(&DenseVector) -> DenseVector + Send + Sync + 'static,
    ) -> Self {
        assert!(dim >= 1, "problem dimension must be positive");
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            jacobian: None,
            solution: None,
            domain: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&DenseVector) -> DenseMatrix + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_domain(
        mut self,
        inside: impl Fn(&DenseVector) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.domain = Some(Arc::new(inside));
        self
    }

    /// Attaches a known root after checking `‖F(x*)‖ ≤ 1e-12`.
    pub fn with_solution(mut self, x: DenseVector) -> Result<Self, ProblemError> {
        let residual = self.eval(&x)?.max_norm();
        if residual.is_nan() || residual > SOLUTION_RESIDUAL_TOL {
            return Err(ProblemError::BadSolution(residual));
        }
        self.solution = Some(x);
        Ok(self)
    }

    pub(crate) fn with_trusted_solution(mut self, x: DenseVector) -> Self {
        self.solution = Some(x);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn known_solution(&self) -> Option<&DenseVector> {
        self.solution.as_ref()
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn contains(&self, x: &DenseVector) -> bool {
        self.domain.as_ref().is_none_or(|d| d(x))
    }

    fn check_dim(&self, x: &DenseVector) -> Result<(), ProblemError> {
        if x.len() != self.dim {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluates `F(x)`, checking the domain and finiteness of the result.
    pub fn eval(&self, x: &DenseVector) -> Result<DenseVector, ProblemError> {
        self.check_dim(x)?;
        if !self.contains(x) {
            return Err(ProblemError::DomainViolation(x.clone()));
        }
        let fx = (self.eval)(x);
        if fx.len() != self.dim {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim,
                found: fx.len(),
            });
        }
        if !fx.is_finite() {
            return Err(ProblemError::NonFiniteEvaluation(x.clone()));
        }
        Ok(fx)
    }

    /// Analytic Jacobian at `x`, if the problem carries one.
    pub fn jacobian(&self, x: &DenseVector) -> Option<Result<DenseMatrix, ProblemError>> {
        let jac = self.jacobian.as_ref()?;
        Some((|| {
            self.check_dim(x)?;
            if !self.contains(x) {
                return Err(ProblemError::DomainViolation(x.clone()));
            }
            let j = jac(x);
            if !j.is_finite() {
                return Err(ProblemError::NonFiniteEvaluation(x.clone()));
            }
            Ok(j)
        })())
    }
}

impl fmt::Debug for NonlinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("has_jacobian", &self.jacobian.is_some())
            .field("solution", &self.solution)
            .field("has_domain", &self.domain.is_some())
            .finish()
    }
}
