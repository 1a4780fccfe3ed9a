//! Derivative-free, inversion-free iterative solvers for nonlinear systems.
//!
//! The centrepiece is the Moser-Steffensen iteration, which replaces both the
//! Jacobian and its inverse: derivatives by first-order divided differences
//! and inverses by a Newton-Schulz style update of an approximate inverse.
//! Newton, Moser, Hald and classical Steffensen are provided as baselines.
//!
//! ```
//! use ms_solve::{registry, solver::{self, SolverConfig}, linalg::DenseVector};
//!
//! let problem = registry::academic_system(3.0);
//! let x0 = DenseVector::from_slice(&[-1.0, 1.0]);
//! let trace = solver::run(&problem, &x0, &SolverConfig::default()).unwrap();
//! assert_eq!(trace.outcome, solver::Outcome::Converged);
//! ```

pub mod cli;
pub mod convergence;
pub mod divdiff;
pub mod linalg;
pub mod ode;
pub mod problem;
pub mod registry;
pub mod reproduce;
pub mod solver;

pub use linalg::{DenseMatrix, DenseVector, LinalgError};
pub use problem::{NonlinearProblem, ProblemError};
pub use solver::{B0Strategy, IterationTrace, Method, Outcome, SolverConfig, SolverError};
