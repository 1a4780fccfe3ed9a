//! The `ms-solve` command-line front end.
//!
//! Exit codes: 0 success, 1 failed `reproduce` verdict, 2 diverged or out of
//! iterations, 3 solver error (singular system, domain violation, failed
//! stage solve), 64 usage error, 74 I/O error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::convergence::{
    check_conditions, estimate_coc, estimate_constants, find_radius, ConditionReport,
    ConvergenceConstants,
};
use crate::linalg::{invert, DenseMatrix, DenseVector};
use crate::ode::{
    chapman_problem, collocation_tableau, default_inner_config, gauss_nodes, integrate,
    nearest_day_divisor, summarize_chapman, ChapmanParams, ChapmanSummary, ExponentSign, OdeError,
    Trajectory, CHAPMAN_DEFAULT_STEP,
};
use crate::registry::{resolve, ProblemParams};
use crate::reproduce::{reproduce_table, TableReport};
use crate::solver::{run, B0Strategy, IterationTrace, Method, Outcome, SolverConfig, SolverError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_SOLVER_ERROR: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

/// Environment variable capping the worker threads of `reproduce`.
pub const THREADS_ENV: &str = "MS_SOLVE_THREADS";

/// Text printed for errors below the double-precision floor.
pub const FLOOR_TEXT: &str = "<=1e-16";

#[derive(Debug, Parser)]
#[command(
    name = "ms-solve",
    version,
    about = "Derivative-free, inversion-free solvers for nonlinear systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solver on a registered problem and print the iteration table.
    Solve(SolveArgs),
    /// Re-run one of the pre-encoded comparison tables (1-6) with a verdict.
    Reproduce(ReproduceArgs),
    /// Compute the local convergence conditions and the largest admissible radius.
    Radius(RadiusArgs),
    /// Integrate the Chapman atmosphere model over ten days.
    Chapman(ChapmanArgs),
    /// Print the Butcher tableau of a collocation method.
    Tableau(TableauArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write the main output here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem name: example3d, academic or affine.
    #[arg(long, default_value = "academic")]
    pub problem: String,
    /// Parameter of the academic system.
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    /// Domain radius of example3d.
    #[arg(long)]
    pub rtilde: Option<f64>,
    /// Affine matrix, rows separated by ';' (e.g. "2,1;1,1").
    #[arg(long, allow_hyphen_values = true)]
    pub matrix: Option<String>,
    /// Affine right-hand side (e.g. "3,2").
    #[arg(long, allow_hyphen_values = true)]
    pub rhs: Option<String>,
    #[arg(long, value_parser = parse_method, default_value = "moser-steffensen")]
    pub method: Method,
    /// Starting point, comma separated (default: the origin).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// approx-inverse:<t>, scaled-identity:<s> or explicit:<rows>.
    #[arg(long, value_parser = parse_b0, default_value = "approx-inverse:1e-3")]
    pub b0: B0Strategy,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-14)]
    pub tol: f64,
    /// Step-size tolerance.
    #[arg(long, default_value_t = 1e-16)]
    pub step_tol: f64,
    #[arg(long, default_value_t = 1e8)]
    pub divergence_bound: f64,
    /// Include every approximate inverse Bn in JSON output.
    #[arg(long)]
    pub verbose: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Table number, 1-6.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=6))]
    pub table: u8,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RadiusArgs {
    /// Problem used to estimate whichever of M, k, beta are not supplied.
    #[arg(long, default_value = "example3d")]
    pub problem: String,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    /// Bound on the Jacobian norm at the root.
    #[arg(long = "M", alias = "m")]
    pub m: Option<f64>,
    /// Centred Lipschitz constant of the divided difference.
    #[arg(long)]
    pub k: Option<f64>,
    /// Norm of B0 (default: norm of the inverse Jacobian at the root).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Norm of I - B0 F'(x*).
    #[arg(long)]
    pub delta: f64,
    /// Outer radius.
    #[arg(long, default_value_t = 1.0)]
    pub rtilde: f64,
    /// Also evaluate the conditions at this radius.
    #[arg(long)]
    pub r: Option<f64>,
    /// Sampling radius for estimated constants (default: rtilde).
    #[arg(long)]
    pub sample_radius: Option<f64>,
    /// Number of sampled pairs for estimated constants.
    #[arg(long, default_value_t = 4000)]
    pub samples: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    Negative,
    Positive,
}

#[derive(Debug, Args)]
pub struct ChapmanArgs {
    /// Step size in seconds; adjusted to the nearest divisor of one day.
    #[arg(long, default_value_t = CHAPMAN_DEFAULT_STEP)]
    pub h: f64,
    /// Stage solver.
    #[arg(long, value_parser = parse_method, default_value = "moser-steffensen")]
    pub inner: Method,
    /// Sign of the exponent in the photolysis rates.
    #[arg(long, value_enum, default_value_t = SignArg::Negative)]
    pub sign: SignArg,
    /// Scaled stage residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Number of Gauss stages (1-3).
    #[arg(long, default_value_t = 2)]
    pub stages: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TableauArgs {
    /// Number of Gauss stages (1-3).
    #[arg(long, default_value_t = 2, conflicts_with = "nodes")]
    pub stages: usize,
    /// Explicit collocation nodes, comma separated.
    #[arg(long)]
    pub nodes: Option<String>,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: SolverError| e.to_string())
}

fn parse_b0(s: &str) -> Result<B0Strategy, String> {
    s.parse().map_err(|e: SolverError| e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid number {t:?} in {s:?}"))
        })
        .collect()
}

fn parse_matrix(s: &str) -> Result<DenseMatrix, String> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_, _>>()?;
    if rows.iter().any(|r| r.len() != rows.len()) {
        return Err(format!("matrix {s:?} is not square"));
    }
    Ok(DenseMatrix::from_rows(&rows))
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(err: io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("I/O error: {err}"),
        }
    }

    fn solver(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SOLVER_ERROR,
            message: message.into(),
        }
    }
}

type CliResult = Result<i32, CliError>;

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, stdout, stderr),
        Command::Reproduce(a) => cmd_reproduce(a, stdout, stderr),
        Command::Radius(a) => cmd_radius(a, stdout, stderr),
        Command::Chapman(a) => cmd_chapman(a, stdout, stderr),
        Command::Tableau(a) => cmd_tableau(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

/// Sends the main output to `--output` or standard output.
fn emit(out: &OutputArgs, stdout: &mut dyn Write, body: &str) -> Result<(), CliError> {
    match &out.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(CliError::io)?);
            w.write_all(body.as_bytes()).map_err(CliError::io)?;
            w.flush().map_err(CliError::io)
        }
        None => stdout.write_all(body.as_bytes()).map_err(CliError::io),
    }
}

fn note(stderr: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(stderr, "{}", line.as_ref()).map_err(CliError::io)
}

/// 17 significant digits, `inf`/`nan` spelled out.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn fmt_error(trace: &IterationTrace, e: Option<f64>) -> String {
    match e {
        Some(e) if trace.at_floor(e) => FLOOR_TEXT.into(),
        other => fmt_opt(other),
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

fn error_value(trace: &IterationTrace, e: Option<f64>) -> Value {
    match e {
        Some(e) if trace.at_floor(e) => json!(FLOOR_TEXT),
        other => opt_num(other),
    }
}

fn outcome_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Converged => EXIT_OK,
        Outcome::Diverged | Outcome::MaxIterations => EXIT_NOT_CONVERGED,
        Outcome::SingularLinearSystem | Outcome::DomainViolation => EXIT_SOLVER_ERROR,
    }
}

fn trace_csv(trace: &IterationTrace) -> String {
    let m = trace.records[0].iterate.len();
    let mut s = String::from("n");
    for i in 1..=m {
        s += &format!(",x{i}");
    }
    s += ",error,residual,solve_condition,mult_condition,inverse_defect,b_norm\n";
    for r in &trace.records {
        s += &r.index.to_string();
        for v in r.iterate.iter() {
            s += ",";
            s += &fmt_float(*v);
        }
        let cols = [
            fmt_error(trace, r.error),
            fmt_float(r.residual),
            fmt_opt(r.solve_condition),
            fmt_opt(r.mult_condition_max),
            fmt_opt(r.inverse_defect),
            fmt_opt(r.approx_inverse_norm),
        ];
        for c in cols {
            s += ",";
            s += &c;
        }
        s += "\n";
    }
    s
}

fn trace_json(trace: &IterationTrace) -> Value {
    let records: Vec<Value> = trace
        .records
        .iter()
        .map(|r| {
            let mut v = json!({
                "n": r.index,
                "x": r.iterate.iter().copied().map(num).collect::<Vec<_>>(),
                "error": error_value(trace, r.error),
                "residual": num(r.residual),
                "solve_condition": opt_num(r.solve_condition),
                "mult_condition": opt_num(r.mult_condition_max),
                "inverse_defect": opt_num(r.inverse_defect),
                "b_norm": opt_num(r.approx_inverse_norm),
            });
            if let Some(b) = &r.approx_inverse {
                v["b"] = json!(b
                    .rows()
                    .iter()
                    .map(|row| row.iter().copied().map(num).collect::<Vec<_>>())
                    .collect::<Vec<_>>());
            }
            v
        })
        .collect();
    json!({
        "method": trace.method.name(),
        "outcome": trace.outcome.name(),
        "iterations": trace.iterations(),
        "precision_floor": num(trace.precision_floor),
        "b0_inverse_defect": opt_num(trace.b0_inverse_defect),
        "b0_product_norm": opt_num(trace.b0_product_norm),
        "max_solve_condition": opt_num(trace.max_solve_condition()),
        "max_mult_condition": opt_num(trace.max_mult_condition()),
        "records": records,
    })
}

fn cmd_solve(a: &SolveArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let params = ProblemParams {
        epsilon: a.epsilon,
        r_tilde: a.rtilde,
        matrix: a
            .matrix
            .as_deref()
            .map(parse_matrix)
            .transpose()
            .map_err(CliError::usage)?,
        rhs: a
            .rhs
            .as_deref()
            .map(parse_list)
            .transpose()
            .map_err(CliError::usage)?
            .map(DenseVector::new),
    };
    let problem = resolve(&a.problem, &params).map_err(|e| CliError::usage(e.to_string()))?;
    let x0 = match &a.x0 {
        Some(s) => DenseVector::new(parse_list(s).map_err(CliError::usage)?),
        None => DenseVector::zeros(problem.dim()),
    };
    if x0.len() != problem.dim() {
        return Err(CliError::usage(format!(
            "x0 has {} entries, problem {} has dimension {}",
            x0.len(),
            a.problem,
            problem.dim()
        )));
    }
    let config = SolverConfig {
        method: a.method,
        max_iterations: a.max_iter,
        residual_tolerance: a.tol,
        step_tolerance: a.step_tol,
        divergence_bound: a.divergence_bound,
        b0_strategy: a.b0.clone(),
        verbose: a.verbose,
    };
    let trace = match run(&problem, &x0, &config) {
        Ok(t) => t,
        Err(e @ SolverError::InvalidConfig(_)) | Err(e @ SolverError::B0Dimension { .. }) => {
            return Err(CliError::usage(e.to_string()))
        }
        Err(e) => return Err(CliError::solver(e.to_string())),
    };
    let coc = problem.known_solution().map(|_| estimate_coc(&trace));

    let body = match a.out.format {
        Format::Csv => trace_csv(&trace),
        Format::Json => {
            let mut v = trace_json(&trace);
            v["problem"] = json!(problem.name());
            v["b0"] = json!(a.b0.to_string());
            v["coc"] = match &coc {
                Some(Ok(c)) => num(*c),
                _ => Value::Null,
            };
            format!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("JSON values serialize")
            )
        }
    };
    emit(&a.out, stdout, &body)?;
    note(
        stderr,
        format!(
            "problem: {}  method: {}  b0: {}",
            problem.name(),
            a.method,
            a.b0
        ),
    )?;
    note(
        stderr,
        format!(
            "outcome: {} after {} iterations",
            trace.outcome,
            trace.iterations()
        ),
    )?;
    if let Some(c) = trace.max_solve_condition() {
        note(stderr, format!("max solve-condition: {c:.3e}"))?;
    }
    if let Some(c) = trace.max_mult_condition() {
        note(stderr, format!("max mult-condition: {c:.3e}"))?;
    }
    match coc {
        Some(Ok(c)) => note(stderr, format!("COC: {c:.4}"))?,
        Some(Err(e)) => note(stderr, format!("COC: unavailable ({e})"))?,
        None => {}
    }
    Ok(outcome_code(trace.outcome))
}

fn thread_cap() -> usize {
    let available = std::thread::available_parallelism().map_or(1, usize::from);
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .map_or(available, |n| n.min(available.max(1)).max(1))
}

fn report_csv(report: &TableReport) -> String {
    let last = report
        .runs
        .iter()
        .map(|r| {
            let ref_last = r.spec.reference.as_ref().map_or(0, |c| c.last_index());
            r.trace.iterations().max(ref_last)
        })
        .max()
        .unwrap_or(0);
    let mut s = String::from("n");
    for r in &report.runs {
        s += &format!(",{}", r.spec.label);
    }
    for r in &report.runs {
        if r.spec.reference.is_some() {
            s += &format!(",reference {}", r.spec.label);
        }
    }
    s += "\n";
    for n in 0..=last {
        s += &n.to_string();
        for r in &report.runs {
            s += ",";
            s += &fmt_error(&r.trace, r.trace.records.get(n).and_then(|rec| rec.error));
        }
        for r in &report.runs {
            if let Some(c) = &r.spec.reference {
                s += ",";
                s += &fmt_opt(c.get(n));
            }
        }
        s += "\n";
    }
    s
}

fn report_json(report: &TableReport) -> Value {
    json!({
        "table": report.spec.id,
        "epsilon": report.spec.epsilon,
        "x0": report.spec.x0,
        "verdict": if report.passed() { "PASS" } else { "FAIL" },
        "checks": report.checks,
        "runs": report.runs.iter().map(|r| {
            let mut v = trace_json(&r.trace);
            v["label"] = json!(r.spec.label);
            v["b0"] = json!(r.spec.b0.to_string());
            v["coc"] = opt_num(r.coc);
            v["reference"] = json!(r.spec.reference);
            v
        }).collect::<Vec<_>>(),
    })
}

fn cmd_reproduce(a: &ReproduceArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let report =
        reproduce_table(a.table, thread_cap()).map_err(|e| CliError::solver(e.to_string()))?;
    let body = match a.out.format {
        Format::Csv => report_csv(&report),
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&report_json(&report)).expect("JSON values serialize")
        ),
    };
    emit(&a.out, stdout, &body)?;
    let spec = &report.spec;
    note(
        stderr,
        format!(
            "table {}: epsilon = {}, x0 = ({}, {})",
            spec.id, spec.epsilon, spec.x0[0], spec.x0[1]
        ),
    )?;
    for r in &report.runs {
        let mut line = format!(
            "  {}: {} after {} iterations",
            r.spec.label,
            r.trace.outcome,
            r.trace.iterations()
        );
        if let Some(c) = r.trace.max_solve_condition() {
            line += &format!(", max solve-condition {c:.3e}");
        }
        if let Some(c) = r.trace.max_mult_condition() {
            line += &format!(", max mult-condition {c:.3e}");
        }
        if let Some(c) = r.coc {
            line += &format!(", COC {c:.4}");
        }
        note(stderr, line)?;
    }
    for c in &report.checks {
        note(
            stderr,
            format!(
                "  [{}] {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ),
        )?;
    }
    note(
        stderr,
        format!("verdict: {}", if report.passed() { "PASS" } else { "FAIL" }),
    )?;
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_VERDICT_FAIL
    })
}

fn conditions_rows(rep: &ConditionReport) -> Vec<(&'static str, String)> {
    let b = |v: bool| v.to_string();
    vec![
        ("cond1", b(rep.cond1)),
        ("cond2", b(rep.cond2)),
        ("cond3", b(rep.cond3)),
        ("cond1_lhs", fmt_float(rep.cond1_lhs)),
        ("alpha1", fmt_float(rep.alpha1)),
        ("alpha_tilde1", fmt_float(rep.alpha_tilde1)),
        ("delta0", fmt_float(rep.delta0)),
        ("delta1", fmt_float(rep.delta1)),
        ("d0", fmt_float(rep.d0)),
        ("cond3_margin", fmt_float(rep.cond3_margin)),
        ("existence_margin", fmt_float(rep.existence_margin)),
        ("contraction_bound", b(rep.contraction_bound)),
        ("scaled_contraction_bound", b(rep.scaled_contraction_bound)),
        ("contraction_factor", fmt_float(rep.contraction_factor)),
    ]
}

fn cmd_radius(a: &RadiusArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let mut sources = Vec::new();
    let needs_problem = a.m.is_none() || a.k.is_none() || a.beta.is_none();
    let (mut m, mut k, mut beta) = (a.m, a.k, a.beta);
    if needs_problem {
        let params = ProblemParams {
            epsilon: a.epsilon,
            ..Default::default()
        };
        let problem = resolve(&a.problem, &params).map_err(|e| CliError::usage(e.to_string()))?;
        let root = problem
            .known_solution()
            .ok_or_else(|| CliError::usage(format!("problem {} has no known solution", a.problem)))?
            .clone();
        if m.is_none() || k.is_none() {
            let radius = a.sample_radius.unwrap_or(a.rtilde);
            let est = estimate_constants(&problem, radius, a.samples)
                .map_err(|e| CliError::usage(e.to_string()))?;
            if m.is_none() {
                m = Some(est.m);
                sources.push("M estimated at the root");
            }
            if k.is_none() {
                k = Some(est.k);
                sources.push("k estimated by sampling (a lower bound)");
            }
        }
        if beta.is_none() {
            let jac = problem
                .jacobian(&root)
                .ok_or_else(|| CliError::usage(format!("problem {} has no Jacobian", a.problem)))?
                .map_err(|e| CliError::usage(e.to_string()))?;
            let inv = invert(&jac).map_err(|e| CliError::solver(e.to_string()))?;
            beta = Some(inv.max_norm());
            sources.push("beta taken as the norm of the inverse Jacobian at the root");
        }
    }
    let (m, k, beta) = (
        m.unwrap_or_default(),
        k.unwrap_or_default(),
        beta.unwrap_or(1.0),
    );
    let base = ConvergenceConstants::new(m, k, beta, a.delta, a.r.unwrap_or(a.rtilde), a.rtilde)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let radius = find_radius(m, k, beta, a.delta, a.rtilde);
    let at_radius = radius.map(|r| check_conditions(&base.with_radius(r)));
    let at_given = a.r.map(|r| check_conditions(&base.with_radius(r)));

    let body = match a.out.format {
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            for (name, v) in [
                ("M", m),
                ("k", k),
                ("beta", beta),
                ("delta", a.delta),
                ("rtilde", a.rtilde),
            ] {
                s += &format!("{name},{}\n", fmt_float(v));
            }
            s += &format!(
                "radius,{}\n",
                radius.map_or_else(|| "none".into(), fmt_float)
            );
            if let Some(rep) = &at_radius {
                for (name, v) in conditions_rows(rep) {
                    s += &format!("{name},{v}\n");
                }
            }
            if let (Some(r), Some(rep)) = (a.r, &at_given) {
                s += &format!("r,{}\n", fmt_float(r));
                for (name, v) in conditions_rows(rep) {
                    s += &format!("{name}@r,{v}\n");
                }
            }
            s
        }
        Format::Json => {
            let v = json!({
                "constants": {"M": m, "k": k, "beta": beta, "delta": a.delta, "rtilde": a.rtilde},
                "sources": sources,
                "radius": radius,
                "conditions_at_radius": at_radius,
                "r": a.r,
                "conditions_at_r": at_given,
            });
            format!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("JSON values serialize")
            )
        }
    };
    emit(&a.out, stdout, &body)?;
    for s in &sources {
        note(stderr, format!("note: {s}"))?;
    }
    match radius {
        Some(r) => note(stderr, format!("radius: {r:.10}"))?,
        None => note(
            stderr,
            format!(
                "no radius exists (1 - (1 + delta)^2 delta = {:.4e})",
                1.0 - (1.0 + a.delta).powi(2) * a.delta
            ),
        )?,
    }
    Ok(EXIT_OK)
}

fn chapman_summary_lines(s: &ChapmanSummary) -> Vec<String> {
    let mut lines = vec!["day,y2_rise,y2_rise_time_s,y1_peak,y1_peak_time_s,y1_min".to_string()];
    for d in &s.days {
        lines.push(format!(
            "{},{:.6e},{},{:.6e},{},{:.6e}",
            d.day + 1,
            d.y2_rise(),
            d.y2_rise_time,
            d.y1_peak,
            d.y1_peak_time,
            d.y1_min
        ));
    }
    lines.push(format!(
        "y2 rises: {}  staircase: {}  y1 spikes: {}  increasing: {}  min y1: {:.4e}  min y2: {:.4e}  positive: {}",
        s.y2_rises, s.staircase, s.y1_spikes, s.spikes_increasing, s.min_y1, s.min_y2, s.all_positive
    ));
    lines
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,y1,y2\n");
    for (t, y) in traj.times.iter().zip(&traj.states) {
        s += &format!(
            "{},{},{}\n",
            fmt_float(*t),
            fmt_float(y[0]),
            fmt_float(y[1])
        );
    }
    s
}

fn cmd_chapman(a: &ChapmanArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    if !(a.h > 0.0 && a.h.is_finite()) {
        return Err(CliError::usage(format!(
            "step size must be positive, got {}",
            a.h
        )));
    }
    let (h, adjusted) = nearest_day_divisor(a.h);
    if adjusted {
        note(
            stderr,
            format!(
                "warning: h = {} does not divide one day; using h = {h}",
                a.h
            ),
        )?;
    }
    let params = ChapmanParams {
        sign: match a.sign {
            SignArg::Negative => ExponentSign::Negative,
            SignArg::Positive => ExponentSign::Positive,
        },
        ..ChapmanParams::default()
    };
    let ode = chapman_problem(params).map_err(|e| CliError::usage(e.to_string()))?;
    let tab = gauss_nodes(a.stages)
        .and_then(|c| collocation_tableau(&c))
        .map_err(|e| CliError::usage(e.to_string()))?;
    let inner = SolverConfig {
        residual_tolerance: a.tol,
        ..default_inner_config(a.inner)
    };
    let traj = match integrate(&ode, &tab, h, &inner) {
        Ok(t) => t,
        Err(e) => {
            let code = match &e {
                OdeError::InnerSolverFailed { outcome, .. } => outcome_code(*outcome),
                OdeError::NonFiniteState { .. } => EXIT_NOT_CONVERGED,
                OdeError::Solver(_) | OdeError::InvalidStep(_) | OdeError::StepMismatch { .. } => {
                    EXIT_USAGE
                }
                _ => EXIT_SOLVER_ERROR,
            };
            return Err(CliError {
                code,
                message: e.to_string(),
            });
        }
    };
    let summary = summarize_chapman(&traj);
    let body = match a.out.format {
        Format::Csv => trajectory_csv(&traj),
        Format::Json => {
            let v = json!({
                "h": h,
                "inner": a.inner.name(),
                "trajectory": {
                    "t": traj.times,
                    "y1": traj.component(0),
                    "y2": traj.component(1),
                },
                "inner_iterations_total": traj.inner_iterations.iter().sum::<usize>(),
                "cold_starts": traj.cold_starts,
                "rescaled_steps": traj.rescaled_steps,
                "summary": summary,
            });
            format!(
                "{}\n",
                serde_json::to_string(&v).expect("JSON values serialize")
            )
        }
    };
    emit(&a.out, stdout, &body)?;
    let iters = &traj.inner_iterations;
    note(
        stderr,
        format!(
            "h = {h} s, {} steps, inner {}: mean {:.2} iterations (max {}), {} cold starts, {} rescaled",
            iters.len(),
            a.inner,
            iters.iter().sum::<usize>() as f64 / iters.len() as f64,
            iters.iter().max().copied().unwrap_or(0),
            traj.cold_starts,
            traj.rescaled_steps
        ),
    )?;
    for line in chapman_summary_lines(&summary) {
        note(stderr, line)?;
    }
    Ok(EXIT_OK)
}

fn cmd_tableau(a: &TableauArgs, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> CliResult {
    let nodes = match &a.nodes {
        Some(s) => parse_list(s).map_err(CliError::usage)?,
        None => gauss_nodes(a.stages).map_err(|e| CliError::usage(e.to_string()))?,
    };
    let tab = collocation_tableau(&nodes).map_err(|e| CliError::usage(e.to_string()))?;
    let body = match a.out.format {
        Format::Csv => {
            let mut s = String::from("row,c");
            for j in 1..=tab.s {
                s += &format!(",a{j}");
            }
            s += "\n";
            for i in 0..tab.s {
                s += &format!("{},{}", i + 1, fmt_float(tab.c[i]));
                for v in tab.a.row(i) {
                    s += &format!(",{}", fmt_float(*v));
                }
                s += "\n";
            }
            s += "b,";
            for v in &tab.b {
                s += &format!(",{}", fmt_float(*v));
            }
            s += "\n";
            s
        }
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&tab).expect("JSON values serialize")
        ),
    };
    emit(&a.out, stdout, &body)?;
    Ok(EXIT_OK)
}
