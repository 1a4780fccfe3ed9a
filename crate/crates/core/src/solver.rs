//! Newton, Moser, Hald, Steffensen and Moser-Steffensen iterations.
//!
//! All five share one driver and produce an [`IterationTrace`]. The three
//! Moser-type methods carry an approximate inverse `Bₙ` of the Jacobian and
//! step with `xₙ₊₁ = xₙ − Bₙ F(xₙ)`; they differ only in the matrix `A` fed to
//! the update `Bₙ₊₁ = 2Bₙ − Bₙ A Bₙ`:
//!
//! | method           | `A`                                   |
//! |------------------|---------------------------------------|
//! | Moser            | `F′(xₙ)`                              |
//! | Hald             | `F′(xₙ₊₁)`                            |
//! | Moser-Steffensen | `[xₙ₊₁, xₙ₊₁ + F(xₙ₊₁); F]`           |
//!
//! Newton and Steffensen solve one linear system per step instead.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::divdiff::divided_difference;
use crate::linalg::{
    invert, product_condition, DenseMatrix, DenseVector, LinalgError, LuFactorization,
};
use crate::problem::{NonlinearProblem, ProblemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Newton,
    Moser,
    Hald,
    Steffensen,
    MoserSteffensen,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Newton,
        Method::Moser,
        Method::Hald,
        Method::Steffensen,
        Method::MoserSteffensen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::Moser => "moser",
            Method::Hald => "hald",
            Method::Steffensen => "steffensen",
            Method::MoserSteffensen => "moser-steffensen",
        }
    }

    /// Whether the method carries an approximate inverse `Bₙ`.
    pub fn is_moser_type(self) -> bool {
        matches!(self, Method::Moser | Method::Hald | Method::MoserSteffensen)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| SolverError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// How the initial approximate inverse `B₀` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum B0Strategy {
    /// `J(x₀)⁻¹` perturbed so that `‖I − B₀ J(x₀)‖ = residual_target`.
    ApproximateInverse {
        residual_target: f64,
    },
    /// `scale · I`.
    ScaledIdentity {
        scale: f64,
    },
    Explicit(DenseMatrix),
}

impl B0Strategy {
    pub fn validate(&self) -> Result<(), SolverError> {
        match self {
            B0Strategy::ApproximateInverse { residual_target: t } if !(0.0..=1.0).contains(t) => {
                Err(SolverError::InvalidConfig(format!(
                    "approximate-inverse residual target must lie in [0, 1], got {t}"
                )))
            }
            B0Strategy::ScaledIdentity { scale } if !(*scale > 0.0 && scale.is_finite()) => Err(
                SolverError::InvalidConfig(format!("identity scale must be positive, got {scale}")),
            ),
            B0Strategy::Explicit(m) if !m.is_finite() => Err(SolverError::InvalidConfig(
                "explicit B0 has non-finite entries".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for B0Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            B0Strategy::ApproximateInverse { residual_target } => {
                write!(f, "approx-inverse:{residual_target:e}")
            }
            B0Strategy::ScaledIdentity { scale } => write!(f, "scaled-identity:{scale:e}"),
            B0Strategy::Explicit(_) => f.write_str("explicit"),
        }
    }
}

/// Parses `approx-inverse:<t>`, `scaled-identity:<s>` (alias `identity:<s>`)
/// and `explicit:<a11>,<a12>;<a21>,<a22>` (rows separated by `;`).
impl FromStr for B0Strategy {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: String| SolverError::InvalidConfig(msg);
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let number = |arg: &str| {
            arg.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("invalid number {arg:?} in B0 spec {s:?}")))
        };
        let strategy = match kind.trim() {
            "approx-inverse" | "approximate-inverse" => B0Strategy::ApproximateInverse {
                residual_target: if arg.is_empty() { 1e-3 } else { number(arg)? },
            },
            "scaled-identity" | "identity" => B0Strategy::ScaledIdentity {
                scale: number(arg)?,
            },
            "explicit" => {
                let rows: Vec<Vec<f64>> = arg
                    .split(';')
                    .map(|row| row.split(',').map(number).collect::<Result<_, _>>())
                    .collect::<Result<_, _>>()?;
                if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
                    return Err(bad(format!("explicit B0 must be square, got {arg:?}")));
                }
                B0Strategy::Explicit(DenseMatrix::from_rows(&rows))
            }
            other => return Err(bad(format!("unknown B0 strategy {other:?}"))),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iterations: usize,
    /// Stop once `‖F(xₙ)‖ ≤ residual_tolerance`.
    pub residual_tolerance: f64,
    /// Stop once `‖xₙ − xₙ₋₁‖ ≤ step_tolerance`.
    pub step_tolerance: f64,
    /// Declare divergence once `‖xₙ‖ > divergence_bound`.
    pub divergence_bound: f64,
    pub b0_strategy: B0Strategy,
    /// Keep every `Bₙ` in the trace.
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::MoserSteffensen,
            max_iterations: 50,
            residual_tolerance: 1e-14,
            step_tolerance: 1e-16,
            divergence_bound: 1e8,
            b0_strategy: B0Strategy::ApproximateInverse {
                residual_target: 1e-3,
            },
            verbose: false,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations < 1 {
            return Err(SolverError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("residual_tolerance", self.residual_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("divergence_bound", self.divergence_bound),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(SolverError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        self.b0_strategy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("initial point rejected: {0}")]
    InitialPoint(ProblemError),
    #[error("cannot build B0: {0}")]
    InitialInverse(LinalgError),
    #[error("B0 has dimension {found}, problem has dimension {expected}")]
    B0Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    MaxIterations,
    Diverged,
    SingularLinearSystem,
    DomainViolation,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::MaxIterations => "max_iterations",
            Outcome::Diverged => "diverged",
            Outcome::SingularLinearSystem => "singular_linear_system",
            Outcome::DomainViolation => "domain_violation",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// State after iteration `index`.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub index: usize,
    pub iterate: DenseVector,
    /// `‖xₙ − x*‖` when the root is known.
    pub error: Option<f64>,
    /// `‖F(xₙ)‖`.
    pub residual: f64,
    /// `Bₙ`, kept only for verbose runs.
    pub approx_inverse: Option<DenseMatrix>,
    /// `‖Bₙ‖`.
    pub approx_inverse_norm: Option<f64>,
    /// `‖I − Bₙ F′(x*)‖` when both the root and the Jacobian are known.
    pub inverse_defect: Option<f64>,
    /// Condition of the linear system solved at `xₙ` (+∞ when singular).
    pub solve_condition: Option<f64>,
    /// Largest product condition in the update that produced `Bₙ`.
    pub mult_condition_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub outcome: Outcome,
    /// Errors below this are at the double-precision floor.
    pub precision_floor: f64,
    /// `‖I − B₀ J(x₀)‖` for Moser-type runs.
    pub b0_inverse_defect: Option<f64>,
    /// `‖B₀ J(x₀)‖` for Moser-type runs.
    pub b0_product_norm: Option<f64>,
}

impl IterationTrace {
    /// Number of completed steps.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.index)
    }

    pub fn last(&self) -> &IterationRecord {
        self.records
            .last()
            .expect("trace holds at least the initial record")
    }

    /// Raw errors `‖xₙ − x*‖`, `n = 0, 1, …`; empty when the root is unknown.
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.error).collect()
    }

    pub fn at_floor(&self, error: f64) -> bool {
        error < self.precision_floor
    }

    pub fn max_solve_condition(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.solve_condition)
            .reduce(f64::max)
    }

    pub fn max_mult_condition(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.mult_condition_max)
            .reduce(f64::max)
    }
}

/// `F′(x)`: the analytic Jacobian when present, otherwise `[x, x; F]`
/// (column-wise central differences).
pub fn derivative(
    problem: &NonlinearProblem,
    x: &DenseVector,
) -> Result<DenseMatrix, ProblemError> {
    match problem.jacobian(x) {
        Some(j) => j,
        None => divided_difference(problem, x, x),
    }
}

/// Builds `B₀` for a Moser-type run.
///
/// For `ApproximateInverse { residual_target: t }` the perturbation is
/// `E = t·R / ‖R·J‖` with `Rᵢⱼ = (−1)^{i+j}`, so `I − B₀J = −E·J` has norm `t`.
pub fn make_b0(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    strategy: &B0Strategy,
) -> Result<DenseMatrix, SolverError> {
    strategy.validate()?;
    let m = problem.dim();
    match strategy {
        B0Strategy::ApproximateInverse { residual_target } => {
            let jac = derivative(problem, x0).map_err(SolverError::InitialPoint)?;
            let inv = invert(&jac).map_err(SolverError::InitialInverse)?;
            if *residual_target == 0.0 {
                return Ok(inv);
            }
            let alternating =
                DenseMatrix::from_fn(m, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
            let scale = alternating.matmul(&jac).max_norm();
            Ok(&inv + &alternating.scale(residual_target / scale))
        }
        B0Strategy::ScaledIdentity { scale } => Ok(DenseMatrix::identity(m).scale(*scale)),
        B0Strategy::Explicit(b) => {
            if b.dim() != m {
                return Err(SolverError::B0Dimension {
                    expected: m,
                    found: b.dim(),
                });
            }
            Ok(b.clone())
        }
    }
}

/// One Moser-type update `2B − B·A·B`, returning the larger of the two
/// product conditions (`B·A`, then `(BA)·B`); a zero product counts as +∞.
pub fn moser_update(b: &DenseMatrix, a: &DenseMatrix) -> (DenseMatrix, f64) {
    let ba = b.matmul(a);
    let bab = ba.matmul(b);
    let c1 = product_condition(b, a, &ba).unwrap_or(f64::INFINITY);
    let c2 = product_condition(&ba, b, &bab).unwrap_or(f64::INFINITY);
    (&b.scale(2.0) - &bab, c1.max(c2))
}

pub fn run_newton(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    run(
        problem,
        x0,
        &SolverConfig {
            method: Method::Newton,
            ..config.clone()
        },
    )
}

pub fn run_steffensen(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    run(
        problem,
        x0,
        &SolverConfig {
            method: Method::Steffensen,
            ..config.clone()
        },
    )
}

pub fn run_moser(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    run(
        problem,
        x0,
        &SolverConfig {
            method: Method::Moser,
            ..config.clone()
        },
    )
}

pub fn run_hald(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    run(
        problem,
        x0,
        &SolverConfig {
            method: Method::Hald,
            ..config.clone()
        },
    )
}

pub fn run_moser_steffensen(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    run(
        problem,
        x0,
        &SolverConfig {
            method: Method::MoserSteffensen,
            ..config.clone()
        },
    )
}

/// Runs `config.method` from `x0`.
pub fn run(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    config.validate()?;
    let b0 = if config.method.is_moser_type() {
        Some(make_b0(problem, x0, &config.b0_strategy)?)
    } else {
        None
    };
    run_from(problem, x0, b0, config)
}

/// Like [`run`], with `B₀` supplied by the caller (ignored by Newton and
/// Steffensen). Moser-type runs never factorize a matrix on this path.
pub fn run_from(
    problem: &NonlinearProblem,
    x0: &DenseVector,
    b0: Option<DenseMatrix>,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    config.validate()?;
    let fx0 = problem.eval(x0).map_err(SolverError::InitialPoint)?;
    let mut driver = Driver::new(problem, config, x0);

    let mut b = match (config.method.is_moser_type(), b0) {
        (true, Some(b)) => {
            if b.dim() != problem.dim() {
                return Err(SolverError::B0Dimension {
                    expected: problem.dim(),
                    found: b.dim(),
                });
            }
            if let Ok(j0) = derivative(problem, x0) {
                let b0j = b.matmul(&j0);
                driver.trace.b0_product_norm = Some(b0j.max_norm());
                driver.trace.b0_inverse_defect =
                    Some((&DenseMatrix::identity(problem.dim()) - &b0j).max_norm());
            }
            Some(b)
        }
        (true, None) => {
            return Err(SolverError::InvalidConfig(
                "Moser-type method needs B0".into(),
            ))
        }
        (false, _) => None,
    };

    driver.push(x0.clone(), &fx0, b.as_ref(), None);
    if fx0.max_norm() <= config.residual_tolerance {
        return Ok(driver.finish(Outcome::Converged));
    }

    let mut x = x0.clone();
    let mut fx = fx0;
    for _ in 0..config.max_iterations {
        let x_next = match config.method {
            Method::Newton | Method::Steffensen => {
                let matrix = match config.method {
                    Method::Newton => derivative(problem, &x),
                    _ => divided_difference(problem, &x, &(&x + &fx)),
                };
                let matrix = match matrix {
                    Ok(m) => m,
                    Err(e) => return Ok(driver.finish(outcome_of(&e))),
                };
                let lu = match LuFactorization::new(&matrix) {
                    Ok(lu) => lu,
                    Err(_) => {
                        driver.set_last_solve_condition(f64::INFINITY);
                        return Ok(driver.finish(Outcome::SingularLinearSystem));
                    }
                };
                driver.set_last_solve_condition(matrix.max_norm() * lu.inverse().max_norm());
                let step = lu.solve(&fx).expect("dimensions match");
                &x - &step
            }
            _ => {
                let b_n = b.as_ref().expect("Moser-type methods carry B");
                &x - &b_n.mul_vec(&fx)
            }
        };

        if !x_next.is_finite() || x_next.max_norm() > config.divergence_bound {
            return Ok(driver.finish(Outcome::Diverged));
        }
        let fx_next = match problem.eval(&x_next) {
            Ok(f) => f,
            Err(e) => return Ok(driver.finish(outcome_of(&e))),
        };
        let step_norm = (&x_next - &x).max_norm();
        let converged =
            fx_next.max_norm() <= config.residual_tolerance || step_norm <= config.step_tolerance;

        let mut mult_condition = None;
        if !converged && config.method.is_moser_type() {
            let b_n = b.as_ref().expect("Moser-type methods carry B");
            let a = match config.method {
                Method::Moser => derivative(problem, &x),
                Method::Hald => derivative(problem, &x_next),
                _ => divided_difference(problem, &x_next, &(&x_next + &fx_next)),
            };
            let a = match a {
                Ok(a) => a,
                Err(e) => {
                    driver.push(x_next, &fx_next, None, None);
                    return Ok(driver.finish(outcome_of(&e)));
                }
            };
            let (b_next, cond) = moser_update(b_n, &a);
            if !b_next.is_finite() {
                driver.push(x_next, &fx_next, None, Some(cond));
                return Ok(driver.finish(Outcome::Diverged));
            }
            b = Some(b_next);
            mult_condition = Some(cond);
        }

        driver.push(x_next.clone(), &fx_next, b.as_ref(), mult_condition);
        if converged {
            return Ok(driver.finish(Outcome::Converged));
        }
        x = x_next;
        fx = fx_next;
    }
    Ok(driver.finish(Outcome::MaxIterations))
}

fn outcome_of(err: &ProblemError) -> Outcome {
    match err {
        ProblemError::DomainViolation(_) => Outcome::DomainViolation,
        _ => Outcome::Diverged,
    }
}

struct Driver<'a> {
    config: &'a SolverConfig,
    solution: Option<DenseVector>,
    jacobian_at_solution: Option<DenseMatrix>,
    trace: IterationTrace,
}

impl<'a> Driver<'a> {
    fn new(problem: &'a NonlinearProblem, config: &'a SolverConfig, _x0: &DenseVector) -> Self {
        let solution = problem.known_solution().cloned();
        let jacobian_at_solution = solution
            .as_ref()
            .and_then(|s| problem.jacobian(s))
            .and_then(Result::ok);
        let precision_floor = 1e-16 * (1.0 + solution.as_ref().map_or(0.0, |s| s.max_norm()));
        Self {
            config,
            solution,
            jacobian_at_solution,
            trace: IterationTrace {
                method: config.method,
                records: Vec::new(),
                outcome: Outcome::MaxIterations,
                precision_floor,
                b0_inverse_defect: None,
                b0_product_norm: None,
            },
        }
    }

    fn push(
        &mut self,
        x: DenseVector,
        fx: &DenseVector,
        b: Option<&DenseMatrix>,
        mult_condition_max: Option<f64>,
    ) {
        let error = self.solution.as_ref().map(|s| (&x - s).max_norm());
        let inverse_defect = match (b, &self.jacobian_at_solution) {
            (Some(b), Some(j)) => Some((&DenseMatrix::identity(j.dim()) - &b.matmul(j)).max_norm()),
            _ => None,
        };
        self.trace.records.push(IterationRecord {
            index: self.trace.records.len(),
            iterate: x,
            error,
            residual: fx.max_norm(),
            approx_inverse: b.filter(|_| self.config.verbose).cloned(),
            approx_inverse_norm: b.map(DenseMatrix::max_norm),
            inverse_defect,
            solve_condition: None,
            mult_condition_max,
        });
    }

    fn set_last_solve_condition(&mut self, c: f64) {
        if let Some(r) = self.trace.records.last_mut() {
            r.solve_condition = Some(c);
        }
    }

    fn finish(mut self, outcome: Outcome) -> IterationTrace {
        self.trace.outcome = outcome;
        self.trace
    }
}
