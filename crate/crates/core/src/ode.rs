//! Implicit Runge-Kutta collocation with a pluggable nonlinear stage solver,
//! and the Chapman atmosphere model.
//!
//! Each step solves for the stage slopes `K = (k₁, …, k_s)`:
//!
//! ```text
//! kᵢ = f(t + cᵢh, y + h Σⱼ aᵢⱼ kⱼ),      y₁ = y + h Σᵢ bᵢ kᵢ
//! ```
//!
//! The unknowns are scaled component-wise by `max(|yⱼ|, 1)/h` so that stage
//! residuals of wildly different magnitudes (the Chapman components differ by
//! six orders) are measured on a common relative scale; a stage solve that
//! stalls under that scale is retried under `max(|yⱼ|, h|kᵢⱼ|, 1)/h`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::divdiff::divided_difference;
use crate::linalg::{invert, lu_solve, DenseMatrix, DenseVector, LinalgError};
use crate::problem::NonlinearProblem;
use crate::solver::{run, run_from, Method, Outcome, SolverConfig, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("collocation nodes {0} and {1} coincide")]
    DuplicateNodes(f64, f64),
    #[error("collocation node {0} lies outside [0, 1]")]
    NodeOutOfRange(f64),
    #[error("Gauss nodes are tabulated for 1 to 3 stages, not {0}")]
    UnsupportedStageCount(usize),
    #[error("invalid ODE problem: {0}")]
    InvalidProblem(String),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("step {h} does not divide the span {span}")]
    StepMismatch { h: f64, span: f64 },
    #[error("stage solver ended with {outcome} at step {step} (t = {t})")]
    InnerSolverFailed {
        step: usize,
        t: f64,
        outcome: Outcome,
    },
    #[error("non-finite state at step {step} (t = {t})")]
    NonFiniteState { step: usize, t: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid Chapman parameters: {0}")]
    InvalidParams(String),
}

/// Butcher tableau of an `s`-stage collocation method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RKTableau {
    pub s: usize,
    pub c: Vec<f64>,
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl RKTableau {
    /// `R(z) = 1 + z bᵀ(I − zA)⁻¹𝟙`, the factor applied to `y` per step of `y′ = λy` with `z = hλ`.
    pub fn stability(&self, z: f64) -> Result<f64, LinalgError> {
        let m = &DenseMatrix::identity(self.s) - &self.a.scale(z);
        let x = lu_solve(&m, &DenseVector::new(vec![1.0; self.s]))?;
        Ok(1.0 + z * self.b.iter().zip(x.iter()).map(|(b, x)| b * x).sum::<f64>())
    }
}

/// Coefficients of `∏ (u − root)` over `roots`, lowest degree first.
fn poly_from_roots(roots: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut p = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; p.len() + 1];
        for (k, &coef) in p.iter().enumerate() {
            next[k + 1] += coef;
            next[k] -= r * coef;
        }
        p = next;
    }
    p
}

fn integrate_poly(p: &[f64], upper: f64) -> f64 {
    p.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &coef)| acc * upper + coef / (k + 1) as f64)
        * upper
}

/// Collocation tableau for distinct nodes in `[0, 1]`: `aᵢⱼ = ∫₀^{cᵢ} ℓⱼ`,
/// `bⱼ = ∫₀¹ ℓⱼ`, with `ℓⱼ` the Lagrange basis, integrated termwise.
pub fn collocation_tableau(c: &[f64]) -> Result<RKTableau, OdeError> {
    if c.is_empty() {
        return Err(OdeError::UnsupportedStageCount(0));
    }
    for &ci in c {
        if !(0.0..=1.0).contains(&ci) {
            return Err(OdeError::NodeOutOfRange(ci));
        }
    }
    for (i, &ci) in c.iter().enumerate() {
        for &cj in &c[i + 1..] {
            if (ci - cj).abs() <= 1e-12 {
                return Err(OdeError::DuplicateNodes(ci, cj));
            }
        }
    }
    let s = c.len();
    let basis: Vec<Vec<f64>> = (0..s)
        .map(|j| {
            let denom: f64 = (0..s).filter(|&l| l != j).map(|l| c[j] - c[l]).product();
            poly_from_roots((0..s).filter(|&l| l != j).map(|l| c[l]))
                .into_iter()
                .map(|coef| coef / denom)
                .collect()
        })
        .collect();
    Ok(RKTableau {
        s,
        c: c.to_vec(),
        a: DenseMatrix::from_fn(s, |i, j| integrate_poly(&basis[j], c[i])),
        b: basis.iter().map(|l| integrate_poly(l, 1.0)).collect(),
    })
}

/// Roots of the shifted Legendre polynomial of degree `s` on `[0, 1]`.
pub fn gauss_nodes(s: usize) -> Result<Vec<f64>, OdeError> {
    match s {
        1 => Ok(vec![0.5]),
        2 => {
            let d = 3f64.sqrt() / 6.0;
            Ok(vec![0.5 - d, 0.5 + d])
        }
        3 => {
            let d = 15f64.sqrt() / 10.0;
            Ok(vec![0.5 - d, 0.5, 0.5 + d])
        }
        other => Err(OdeError::UnsupportedStageCount(other)),
    }
}

/// The `s`-stage Gauss method (order `2s`).
pub fn gauss_tableau(s: usize) -> Result<RKTableau, OdeError> {
    collocation_tableau(&gauss_nodes(s)?)
}

pub type RhsFn = dyn Fn(f64, &DenseVector) -> DenseVector + Send + Sync;
pub type OdeJacobianFn = dyn Fn(f64, &DenseVector) -> DenseMatrix + Send + Sync;

/// `y′ = f(t, y)`, `y(t₀) = y₀` on `[t₀, t_end]`.
#[derive(Clone)]
pub struct ODEProblem {
    pub dim: usize,
    pub rhs: Arc<RhsFn>,
    pub jacobian: Option<Arc<OdeJacobianFn>>,
    pub y0: DenseVector,
    pub t_span: (f64, f64),
}

impl ODEProblem {
    pub fn new(
        rhs: impl Fn(f64, &DenseVector) -> DenseVector + Send + Sync + 'static,
        y0: DenseVector,
        t_span: (f64, f64),
    ) -> Result<Self, OdeError> {
        if y0.is_empty() {
            return Err(OdeError::InvalidProblem("empty initial state".into()));
        }
        if !t_span.0.is_finite() || !t_span.1.is_finite() || t_span.1 <= t_span.0 {
            return Err(OdeError::InvalidProblem(format!(
                "empty time span {t_span:?}"
            )));
        }
        Ok(Self {
            dim: y0.len(),
            rhs: Arc::new(rhs),
            jacobian: None,
            y0,
            t_span,
        })
    }

    /// Attaches `∂f/∂y`, used for the analytic stage Jacobian.
    pub fn with_jacobian(
        mut self,
        jac: impl Fn(f64, &DenseVector) -> DenseMatrix + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }
}

impl std::fmt::Debug for ODEProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ODEProblem")
            .field("dim", &self.dim)
            .field("y0", &self.y0)
            .field("t_span", &self.t_span)
            .field("has_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

/// Inner solver settings used by the CLI and the examples: 100 iterations,
/// scaled stage residual below `1e-12`.
pub fn default_inner_config(method: Method) -> SolverConfig {
    SolverConfig {
        method,
        max_iterations: 100,
        residual_tolerance: 1e-12,
        step_tolerance: 1e-15,
        ..SolverConfig::default()
    }
}

/// An approximate inverse of a scaled stage Jacobian together with the scale
/// it was computed under.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub inverse: DenseMatrix,
    pub scale: DenseVector,
}

impl WarmStart {
    /// The same inverse expressed under `scale`: `D'⁻¹ D B D⁻¹ D'`.
    pub fn rescaled(&self, scale: &DenseVector) -> DenseMatrix {
        let n = self.inverse.dim();
        let mut b = self.inverse.clone();
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] *= (self.scale[i] / scale[i]) * (scale[j] / self.scale[j]);
            }
        }
        b
    }
}

/// Result of one IRK step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub y: DenseVector,
    /// Final approximate inverse of the stage Jacobian (Moser-type inner methods).
    pub warm: Option<WarmStart>,
    pub iterations: usize,
    /// Whether `B₀` had to be built from scratch.
    pub cold_start: bool,
    /// Whether the stage unknowns had to be rescaled from a failed solve.
    pub rescaled: bool,
}

/// Stage scale `max(|yᵣ|, 1)/h`, repeated per stage.
fn state_scale(y: &DenseVector, h: f64, s: usize) -> DenseVector {
    (0..s)
        .flat_map(|_| y.iter().map(|v| v.abs().max(1.0) / h))
        .collect()
}

/// Stage scale `max(|yᵣ|, h maxᵢ |kᵢᵣ|, 1)/h`, repeated per stage.
fn slope_scale(y: &DenseVector, k: &DenseVector, h: f64, s: usize) -> DenseVector {
    let m = y.len();
    (0..s)
        .flat_map(|_| {
            (0..m).map(move |r| {
                let kmax = (0..s).map(|i| k[i * m + r].abs()).fold(0.0, f64::max);
                y[r].abs().max(h * kmax).max(1.0) / h
            })
        })
        .collect()
}

/// The scaled stage system `G̃(K̃) = (K − f(t + cᵢh, Yᵢ)) / σ` with `K = σ ∘ K̃`.
fn stage_problem(
    ode: &ODEProblem,
    tab: &RKTableau,
    t: f64,
    y: &DenseVector,
    h: f64,
    scale: &DenseVector,
) -> NonlinearProblem {
    let (m, s) = (ode.dim, tab.s);

    let stage_states = {
        let (a, y) = (tab.a.clone(), y.clone());
        let scale = scale.clone();
        move |kt: &DenseVector| -> Vec<DenseVector> {
            (0..s)
                .map(|i| {
                    (0..m)
                        .map(|r| {
                            y[r] + h
                                * (0..s)
                                    .map(|j| a[(i, j)] * kt[j * m + r] * scale[j * m + r])
                                    .sum::<f64>()
                        })
                        .collect()
                })
                .collect()
        }
    };

    let rhs = ode.rhs.clone();
    let c = tab.c.clone();
    let states = stage_states.clone();
    let sc = scale.clone();
    let mut problem = NonlinearProblem::new("irk-stage", s * m, move |kt: &DenseVector| {
        let ys = states(kt);
        let mut g = DenseVector::zeros(s * m);
        for (i, yi) in ys.iter().enumerate() {
            let fi = rhs(t + c[i] * h, yi);
            for r in 0..m {
                let idx = i * m + r;
                g[idx] = kt[idx] - fi[r] / sc[idx];
            }
        }
        g
    });

    if let Some(jac) = ode.jacobian.clone() {
        let (a, c, sc) = (tab.a.clone(), tab.c.clone(), scale.clone());
        problem = problem.with_jacobian(move |kt: &DenseVector| {
            let ys = stage_states(kt);
            let mut out = DenseMatrix::identity(s * m);
            for (i, yi) in ys.iter().enumerate() {
                let ji = jac(t + c[i] * h, yi);
                for j in 0..s {
                    for r in 0..m {
                        for q in 0..m {
                            let (row, col) = (i * m + r, j * m + q);
                            out[(row, col)] -= h * a[(i, j)] * ji[(r, q)] * sc[col] / sc[row];
                        }
                    }
                }
            }
            out
        });
    }
    problem
}

/// One step from `(t, y)`. See [`irk_step_warm`].
pub fn irk_step(
    ode: &ODEProblem,
    tab: &RKTableau,
    t: f64,
    y: &DenseVector,
    h: f64,
    inner: &SolverConfig,
) -> Result<DenseVector, OdeError> {
    irk_step_warm(ode, tab, t, y, h, inner, None).map(|r| r.y)
}

/// One step from `(t, y)` with initial stage guess `kᵢ = f(t, y)`.
///
/// The unknowns are first scaled by `max(|yᵣ|, 1)/h`. Moser-type inner methods
/// start from `warm` when given (and retry cold if that solve fails); a cold
/// start inverts the divided difference `[K⁰, K⁰ + G(K⁰); G]` at the initial
/// guess. If the solve still fails, the slopes it reached set a new scale
/// `max(|yᵣ|, h|kᵢᵣ|, 1)/h` and the solve is restarted cold from there once:
/// when a slope dwarfs its state component the residual floor under the first
/// scale can exceed the tolerance.
pub fn irk_step_warm(
    ode: &ODEProblem,
    tab: &RKTableau,
    t: f64,
    y: &DenseVector,
    h: f64,
    inner: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<StepReport, OdeError> {
    step_at(ode, tab, 0, t, y, h, inner, warm)
}

#[allow(clippy::too_many_arguments)]
fn step_at(
    ode: &ODEProblem,
    tab: &RKTableau,
    step: usize,
    t: f64,
    y: &DenseVector,
    h: f64,
    inner: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<StepReport, OdeError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OdeError::InvalidStep(h));
    }
    if y.len() != ode.dim {
        return Err(OdeError::InvalidProblem(format!(
            "state has length {}, expected {}",
            y.len(),
            ode.dim
        )));
    }
    let non_finite = OdeError::NonFiniteState { step, t };
    let f0 = (ode.rhs)(t, y);
    if !f0.is_finite() || !y.is_finite() {
        return Err(non_finite);
    }
    let (m, s) = (ode.dim, tab.s);
    let failed = |outcome| OdeError::InnerSolverFailed { step, t, outcome };
    let config = SolverConfig {
        verbose: true,
        ..inner.clone()
    };
    let solve = |problem: &NonlinearProblem,
                 k0: &DenseVector,
                 b0: Option<DenseMatrix>|
     -> Result<_, OdeError> {
        let trace = match b0 {
            Some(b0) => run_from(problem, k0, Some(b0), &config),
            None => run(problem, k0, &config),
        };
        match trace {
            Ok(trace) => Ok(trace),
            Err(SolverError::InitialPoint(_)) => Err(non_finite.clone()),
            Err(e) => Err(e.into()),
        }
    };
    let cold = |problem: &NonlinearProblem, k0: &DenseVector| -> Result<_, OdeError> {
        if !inner.method.is_moser_type() {
            return solve(problem, k0, None);
        }
        let g0 = problem.eval(k0).map_err(|_| non_finite.clone())?;
        let theta = divided_difference(problem, k0, &(k0 + &g0)).map_err(|_| non_finite.clone())?;
        let b0 = invert(&theta).map_err(|_| failed(Outcome::SingularLinearSystem))?;
        solve(problem, k0, Some(b0))
    };

    let mut scale = state_scale(y, h, s);
    let mut problem = stage_problem(ode, tab, t, y, h, &scale);
    let k0: DenseVector = (0..s * m).map(|i| f0[i % m] / scale[i]).collect();

    let mut cold_start = false;
    let mut rescaled = false;
    let mut iterations = 0;
    let warm_trace =
        match warm.filter(|w| inner.method.is_moser_type() && w.inverse.dim() == problem.dim()) {
            Some(w) => Some(solve(&problem, &k0, Some(w.rescaled(&scale)))?),
            None => None,
        };
    let mut trace = match warm_trace {
        Some(tr) if tr.outcome == Outcome::Converged => tr,
        other => {
            iterations += other.map_or(0, |tr| tr.iterations());
            cold_start = inner.method.is_moser_type();
            cold(&problem, &k0)?
        }
    };
    if trace.outcome != Outcome::Converged {
        let reached = &trace.last().iterate;
        if reached.is_finite() {
            iterations += trace.iterations();
            let k: DenseVector = (0..s * m).map(|i| reached[i] * scale[i]).collect();
            scale = slope_scale(y, &k, h, s);
            problem = stage_problem(ode, tab, t, y, h, &scale);
            let k1: DenseVector = (0..s * m).map(|i| k[i] / scale[i]).collect();
            rescaled = true;
            cold_start = inner.method.is_moser_type();
            trace = cold(&problem, &k1)?;
        }
    }
    iterations += trace.iterations();
    if trace.outcome != Outcome::Converged {
        return Err(failed(trace.outcome));
    }

    let last = trace.last();
    let kt = &last.iterate;
    let y_next: DenseVector = (0..m)
        .map(|r| {
            y[r] + h
                * (0..s)
                    .map(|i| tab.b[i] * kt[i * m + r] * scale[i * m + r])
                    .sum::<f64>()
        })
        .collect();
    if !y_next.is_finite() {
        return Err(non_finite);
    }
    let warm = last
        .approx_inverse
        .clone()
        .map(|inverse| WarmStart { inverse, scale });
    Ok(StepReport {
        y: y_next,
        warm,
        iterations,
        cold_start,
        rescaled,
    })
}

/// A fixed-step trajectory, endpoints included.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DenseVector>,
    /// Inner iterations per step.
    pub inner_iterations: Vec<usize>,
    pub cold_starts: usize,
    /// Steps whose stage solve was restarted under a slope-based scale.
    pub rescaled_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &DenseVector {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// Component `j` along the trajectory.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|y| y[j]).collect()
    }
}

/// Integrates over `ode.t_span` with fixed step `h`, which must divide the
/// span to within `1e-9` relative. Moser-type inner solvers are warm-started
/// from the previous step's final approximate inverse.
pub fn integrate(
    ode: &ODEProblem,
    tab: &RKTableau,
    h: f64,
    inner: &SolverConfig,
) -> Result<Trajectory, OdeError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OdeError::InvalidStep(h));
    }
    inner.validate()?;
    let (t0, t_end) = ode.t_span;
    let span = t_end - t0;
    let n_steps = (span / h).round() as usize;
    if n_steps == 0 || ((n_steps as f64) * h - span).abs() > 1e-9 * span {
        return Err(OdeError::StepMismatch { h, span });
    }

    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        inner_iterations: Vec::with_capacity(n_steps),
        cold_starts: 0,
        rescaled_steps: 0,
    };
    traj.times.push(t0);
    traj.states.push(ode.y0.clone());
    let mut y = ode.y0.clone();
    let mut warm: Option<WarmStart> = None;
    for n in 0..n_steps {
        let t = t0 + n as f64 * h;
        let report = step_at(ode, tab, n, t, &y, h, inner, warm.as_ref())?;
        traj.inner_iterations.push(report.iterations);
        traj.cold_starts += usize::from(report.cold_start);
        traj.rescaled_steps += usize::from(report.rescaled);
        warm = report.warm;
        y = report.y;
        traj.times.push(if n + 1 == n_steps {
            t_end
        } else {
            t0 + (n + 1) as f64 * h
        });
        traj.states.push(y.clone());
    }
    Ok(traj)
}

/// Sign in the photolysis rates `kᵢ(t) = exp(±aᵢ / sin ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentSign {
    /// `exp(+aᵢ / sin ωt)`: overflows shortly after sunrise.
    Positive,
    /// `exp(−aᵢ / sin ωt)`: the physically meaningful rates.
    Negative,
}

impl ExponentSign {
    fn factor(self) -> f64 {
        match self {
            ExponentSign::Positive => 1.0,
            ExponentSign::Negative => -1.0,
        }
    }
}

/// Chapman ozone kinetics with the O₂ concentration `y3` held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChapmanParams {
    pub y3: f64,
    pub k1: f64,
    pub k2: f64,
    pub a3: f64,
    pub a4: f64,
    /// Angular frequency of the day cycle, `π/43200` s⁻¹.
    pub omega: f64,
    pub sign: ExponentSign,
}

impl Default for ChapmanParams {
    fn default() -> Self {
        Self {
            y3: 3.7e16,
            k1: 1.63e-16,
            k2: 4.66e-16,
            a3: 22.62,
            a4: 7.601,
            omega: PI / 43200.0,
            sign: ExponentSign::Negative,
        }
    }
}

pub const SECONDS_PER_DAY: f64 = 86400.0;
/// Ten days.
pub const CHAPMAN_SPAN: f64 = 8.64e5;
/// Default step: 512 steps per day.
pub const CHAPMAN_DEFAULT_STEP: f64 = 168.75;

impl ChapmanParams {
    pub fn validate(&self) -> Result<(), OdeError> {
        for (name, v) in [
            ("y3", self.y3),
            ("k1", self.k1),
            ("k2", self.k2),
            ("a3", self.a3),
            ("a4", self.a4),
            ("omega", self.omega),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OdeError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `exp(±a / sin ωt)` in daylight, 0 at night.
    pub fn rate(&self, a: f64, t: f64) -> f64 {
        let s = (self.omega * t).sin();
        if s > 0.0 {
            (self.sign.factor() * a / s).exp()
        } else {
            0.0
        }
    }

    pub fn k3(&self, t: f64) -> f64 {
        self.rate(self.a3, t)
    }

    pub fn k4(&self, t: f64) -> f64 {
        self.rate(self.a4, t)
    }
}

/// `y₁ = [O]`, `y₂ = [O₃]`:
///
/// ```text
/// y₁′ = 2k₃(t)y₃ + k₄(t)y₂ − (k₁y₃ + k₂y₂)y₁
/// y₂′ = k₁y₁y₃ − (k₂y₁ + k₄(t))y₂
/// ```
///
/// from `y(0) = (10⁶, 10¹²)` over ten days.
pub fn chapman_problem(params: ChapmanParams) -> Result<ODEProblem, OdeError> {
    params.validate()?;
    let p = params;
    let ode = ODEProblem::new(
        move |t, y: &DenseVector| {
            let (k3, k4) = (p.k3(t), p.k4(t));
            DenseVector::new(vec![
                2.0 * k3 * p.y3 + k4 * y[1] - (p.k1 * p.y3 + p.k2 * y[1]) * y[0],
                p.k1 * y[0] * p.y3 - (p.k2 * y[0] + k4) * y[1],
            ])
        },
        DenseVector::new(vec![1e6, 1e12]),
        (0.0, CHAPMAN_SPAN),
    )?;
    Ok(ode.with_jacobian(move |t, y: &DenseVector| {
        let k4 = p.k4(t);
        DenseMatrix::from_rows(&[
            vec![-(p.k1 * p.y3 + p.k2 * y[1]), k4 - p.k2 * y[0]],
            vec![p.k1 * p.y3 - p.k2 * y[1], -(p.k2 * y[0] + k4)],
        ])
    }))
}

/// One day of a Chapman trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DaySummary {
    pub day: usize,
    pub y2_start: f64,
    pub y2_end: f64,
    /// Seconds after the day's midnight at which `y₂` first reaches half of the day's rise.
    pub y2_rise_time: f64,
    /// Largest drop of `y₂` below its running maximum, as a fraction of the rise.
    pub y2_max_dip_fraction: f64,
    pub y1_peak: f64,
    pub y1_peak_time: f64,
    pub y1_min: f64,
}

impl DaySummary {
    pub fn y2_rise(&self) -> f64 {
        self.y2_end - self.y2_start
    }
}

/// Tolerated `y₂` drop below its running maximum, relative to the day's rise.
pub const STAIRCASE_DIP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct ChapmanSummary {
    pub days: Vec<DaySummary>,
    /// Days on which `y₂` rises.
    pub y2_rises: usize,
    /// Days on which `y₁` peaks at least tenfold above both of its midnight values.
    pub y1_spikes: usize,
    /// `y₂` never drops below its running maximum by more than the tolerance.
    pub staircase: bool,
    /// Daily `y₁` peaks strictly increase.
    pub spikes_increasing: bool,
    pub min_y1: f64,
    pub min_y2: f64,
    pub all_finite: bool,
    pub all_positive: bool,
}

impl ChapmanSummary {
    /// Staircase with one rise and one growing spike per day, positive and finite throughout.
    pub fn qualitative_pass(&self) -> bool {
        let n = self.days.len();
        self.y2_rises == n
            && self.y1_spikes == n
            && self.staircase
            && self.spikes_increasing
            && self.all_finite
            && self.all_positive
    }
}

/// Per-day statistics of a Chapman trajectory sampled on a grid aligned with midnight.
pub fn summarize_chapman(traj: &Trajectory) -> ChapmanSummary {
    let t0 = traj.times[0];
    let n_days = ((traj.times[traj.len() - 1] - t0) / SECONDS_PER_DAY).round() as usize;
    let mut days = Vec::with_capacity(n_days);
    for day in 0..n_days {
        let (start, end) = (
            t0 + day as f64 * SECONDS_PER_DAY,
            t0 + (day + 1) as f64 * SECONDS_PER_DAY,
        );
        let idx: Vec<usize> = (0..traj.len())
            .filter(|&i| traj.times[i] >= start - 1e-6 && traj.times[i] <= end + 1e-6)
            .collect();
        let (first, last) = (idx[0], idx[idx.len() - 1]);
        let (y2_start, y2_end) = (traj.states[first][1], traj.states[last][1]);
        let rise = y2_end - y2_start;
        let half = y2_start + 0.5 * rise;
        let rise_at = idx
            .iter()
            .copied()
            .find(|&i| traj.states[i][1] >= half)
            .unwrap_or(last);
        let mut running = f64::NEG_INFINITY;
        let mut dip: f64 = 0.0;
        for &i in &idx {
            let v = traj.states[i][1];
            running = running.max(v);
            dip = dip.max(running - v);
        }
        let peak = idx
            .iter()
            .copied()
            .max_by(|&i, &j| traj.states[i][0].total_cmp(&traj.states[j][0]))
            .unwrap();
        days.push(DaySummary {
            day,
            y2_start,
            y2_end,
            y2_rise_time: traj.times[rise_at] - start,
            y2_max_dip_fraction: if rise > 0.0 {
                dip / rise
            } else {
                f64::INFINITY
            },
            y1_peak: traj.states[peak][0],
            y1_peak_time: traj.times[peak] - start,
            y1_min: idx
                .iter()
                .map(|&i| traj.states[i][0])
                .fold(f64::INFINITY, f64::min),
        });
    }

    let y2_rises = days
        .iter()
        .filter(|d| d.y2_rise() > 1e-9 * d.y2_start.abs())
        .count();
    let y1_spikes = days
        .iter()
        .enumerate()
        .filter(|(i, d)| {
            let at = |k: usize| {
                traj.states[(k as f64 * SECONDS_PER_DAY / step_of(traj)).round() as usize][0]
            };
            d.y1_peak >= 10.0 * at(*i).max(at(i + 1)).max(1.0)
        })
        .count();
    let min_of = |j: usize| {
        traj.states
            .iter()
            .map(|y| y[j])
            .fold(f64::INFINITY, f64::min)
    };
    let (min_y1, min_y2) = (min_of(0), min_of(1));
    ChapmanSummary {
        staircase: days
            .iter()
            .all(|d| d.y2_max_dip_fraction <= STAIRCASE_DIP_TOLERANCE),
        spikes_increasing: days.windows(2).all(|w| w[1].y1_peak > w[0].y1_peak),
        y2_rises,
        y1_spikes,
        all_finite: traj.states.iter().all(DenseVector::is_finite),
        all_positive: min_y1 > 0.0 && min_y2 > 0.0,
        min_y1,
        min_y2,
        days,
    }
}

fn step_of(traj: &Trajectory) -> f64 {
    (traj.times[traj.len() - 1] - traj.times[0]) / (traj.len() - 1) as f64
}

/// The divisor of one day closest to `h`, and whether it differs from `h`.
pub fn nearest_day_divisor(h: f64) -> (f64, bool) {
    let n = (SECONDS_PER_DAY / h).round().max(1.0);
    let adjusted = SECONDS_PER_DAY / n;
    (adjusted, (adjusted - h).abs() > 1e-9 * h)
}
