//! Pre-encoded runs on the academic system with qualitative verdicts.
//!
//! Each table pairs classical Steffensen with Moser-Steffensen (or compares
//! `B₀` choices) from a fixed start, and checks convergence patterns,
//! condition-number magnitudes and the observed order against reference
//! error columns.

use std::thread;

use serde::Serialize;
use thiserror::Error;

use crate::convergence::estimate_coc;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::registry::academic_system;
use crate::solver::{run, B0Strategy, IterationTrace, Method, Outcome, SolverConfig, SolverError};

pub const TABLE_IDS: [u8; 6] = [1, 2, 3, 4, 5, 6];

/// A computed error counts as having reached the double floor below this.
pub const FLOOR_TARGET: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error("unknown table {0} (expected 1-6)")]
    UnknownTable(u8),
    #[error("run {label:?} failed: {source}")]
    Run { label: String, source: SolverError },
}

/// Reference errors `e_first, e_first+1, …` for one column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceColumn {
    pub first_index: usize,
    pub values: Vec<f64>,
}

impl ReferenceColumn {
    fn new(first_index: usize, values: &[f64]) -> Self {
        Self {
            first_index,
            values: values.to_vec(),
        }
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.first_index)
            .and_then(|i| self.values.get(i))
            .copied()
    }

    pub fn last_index(&self) -> usize {
        self.first_index + self.values.len() - 1
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    pub label: String,
    #[serde(serialize_with = "display")]
    pub method: Method,
    #[serde(serialize_with = "display")]
    pub b0: B0Strategy,
    pub reference: Option<ReferenceColumn>,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct TableSpec {
    pub id: u8,
    pub epsilon: f64,
    pub x0: [f64; 2],
    pub runs: Vec<RunSpec>,
}

impl TableSpec {
    pub fn config(&self, run: &RunSpec) -> SolverConfig {
        SolverConfig {
            method: run.method,
            b0_strategy: run.b0.clone(),
            ..SolverConfig::default()
        }
    }
}

fn pair(steffensen: &[f64], moser_steffensen: &[f64]) -> Vec<RunSpec> {
    vec![
        RunSpec {
            label: "steffensen".into(),
            method: Method::Steffensen,
            b0: B0Strategy::ApproximateInverse {
                residual_target: 1e-3,
            },
            reference: Some(ReferenceColumn::new(1, steffensen)),
        },
        RunSpec {
            label: "moser-steffensen".into(),
            method: Method::MoserSteffensen,
            b0: B0Strategy::ApproximateInverse {
                residual_target: 1e-3,
            },
            reference: Some(ReferenceColumn::new(1, moser_steffensen)),
        },
    ]
}

pub fn table_spec(id: u8) -> Result<TableSpec, ReproduceError> {
    let (epsilon, x0, runs) = match id {
        1 => (
            1.0,
            [-1.0, 1.0],
            pair(
                &[15.5, 18.4, 21.2, 24.1, 26.9, 29.8, 32.6, 35.4],
                &[
                    1.00, 3.76e-1, 1.08e-1, 1.80e-2, 9.12e-4, 3.61e-6, 7.60e-11, 4.18e-20,
                ],
            ),
        ),
        2 => (
            0.1,
            [-0.25, 0.25],
            pair(
                &[1.70, 1.98, 2.27, 2.55, 2.83, 3.12, 3.41, 3.69, 3.97, 4.25],
                &[
                    6.84e-1, 2.08e-1, 8.90e-2, 3.95e-2, 6.80e-2, 6.95e-4, 1.22e-5, 5.38e-9,
                    1.33e-15, 1.00e-28,
                ],
            ),
        ),
        3 => (
            3.0,
            [-1.0, 1.0],
            pair(
                &[1.41, 7.61e-1, 2.40e-1, 2.60e-2, 3.11e-4, 4.56e-8, 9.79e-16],
                &[3.55e-1, 5.09e-2, 1.86e-3, 3.74e-6, 2.01e-11, 7.10e-22],
            ),
        ),
        4 => (
            1.0,
            [-0.5, 0.5],
            pair(
                &[1.49, 2.75, 3.35, 6.82, 9.80, 12.7, 15.6, 18.4, 21.3, 24.1],
                &[
                    2.12e-1, 4.21e-2, 3.09e-3, 2.68e-5, 2.77e-9, 3.75e-17, 8.71e-33,
                ],
            ),
        ),
        5 => {
            let columns: [(f64, &[f64]); 3] = [
                (
                    1.0,
                    &[
                        1.84, 8.75e-1, 2.53e-1, 3.29e-2, 8.61e-4, 8.37e-7, 1.01e-12, 1.83e-24,
                    ],
                ),
                (
                    1e-1,
                    &[1.10, 2.83e-1, 3.56e-2, 9.86e-4, 1.12e-6, 1.89e-12, 6.57e-24],
                ),
                (
                    1e-3,
                    &[
                        9.44e-1, 2.24e-1, 2.43e-2, 4.87e-4, 2.82e-7, 1.21e-13, 2.71e-26,
                    ],
                ),
            ];
            let runs = columns
                .iter()
                .map(|&(t, reference)| RunSpec {
                    label: format!("moser-steffensen(t={t:e})"),
                    method: Method::MoserSteffensen,
                    b0: B0Strategy::ApproximateInverse { residual_target: t },
                    reference: Some(ReferenceColumn::new(1, reference)),
                })
                .collect();
            (3.0, [-2.0, 2.0], runs)
        }
        6 => {
            let b0 = B0Strategy::ScaledIdentity { scale: 1e-2 };
            let runs = vec![
                RunSpec {
                    label: "steffensen".into(),
                    method: Method::Steffensen,
                    b0: b0.clone(),
                    reference: None,
                },
                RunSpec {
                    label: "moser-steffensen".into(),
                    method: Method::MoserSteffensen,
                    b0,
                    reference: Some(ReferenceColumn::new(
                        10,
                        &[1.13e-2, 2.81e-4, 2.07e-7, 1.30e-13, 5.88e-26],
                    )),
                },
            ];
            (2.0, [2.0, 2.0], runs)
        }
        other => return Err(ReproduceError::UnknownTable(other)),
    };
    Ok(TableSpec {
        id,
        epsilon,
        x0,
        runs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub spec: RunSpec,
    pub trace: IterationTrace,
    pub coc: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub spec: TableSpec,
    pub runs: Vec<RunResult>,
    pub checks: Vec<Check>,
}

impl TableReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn run(&self, label: &str) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.spec.label == label)
    }
}

/// Whether the error never decreases and the run did not converge.
pub fn errors_non_decreasing(trace: &IterationTrace) -> bool {
    let e = trace.errors();
    trace.outcome != Outcome::Converged && e.windows(2).all(|w| w[1] >= w[0])
}

/// Converged with a final error below [`FLOOR_TARGET`].
pub fn reaches_floor(trace: &IterationTrace) -> bool {
    trace.outcome == Outcome::Converged && trace.last().error.is_some_and(|e| e < FLOOR_TARGET)
}

/// Largest ratio `max(a/b, b/a)` between computed and reference errors over
/// the indices where the reference lies above the precision floor. Computed
/// errors below the floor (or missing because the run stopped) count as the
/// floor itself.
pub fn max_reference_ratio(
    trace: &IterationTrace,
    reference: &ReferenceColumn,
) -> Option<(usize, f64)> {
    let errors = trace.errors();
    let floor = trace.precision_floor;
    (reference.first_index..=reference.last_index())
        .filter_map(|n| {
            let r = reference.get(n)?;
            if r < floor {
                return None;
            }
            let e = errors.get(n).copied().unwrap_or(0.0).max(floor);
            Some((n, (e / r).max(r / e)))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// `eₙ₊₁ / eₙ²` over the last `count` errors above the precision floor.
pub fn quadratic_ratios(trace: &IterationTrace, count: usize) -> Vec<f64> {
    let above: Vec<f64> = trace
        .errors()
        .into_iter()
        .filter(|&e| !trace.at_floor(e))
        .collect();
    let tail = &above[above.len().saturating_sub(count)..];
    tail.windows(2).map(|w| w[1] / (w[0] * w[0])).collect()
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}"))
}

fn fmt_error(trace: &IterationTrace, e: Option<f64>) -> String {
    match e {
        Some(e) if trace.at_floor(e) => "at the precision floor".into(),
        other => fmt_opt(other),
    }
}

fn checks_for(spec: &TableSpec, runs: &[RunResult]) -> Vec<Check> {
    let get = |label: &str| {
        &runs
            .iter()
            .find(|r| r.spec.label == label)
            .expect("run present")
            .trace
    };
    let mut checks = Vec::new();
    let floor_check = |label: &str, trace: &IterationTrace| {
        Check::new(
            format!("{label} converges to the floor"),
            reaches_floor(trace),
            format!(
                "{}, final error {}",
                trace.outcome,
                fmt_error(trace, trace.last().error)
            ),
        )
    };
    match spec.id {
        1 | 2 | 4 => {
            let st = get("steffensen");
            let ms = get("moser-steffensen");
            checks.push(Check::new(
                "steffensen errors non-decreasing",
                errors_non_decreasing(st),
                format!(
                    "{} after {} iterations, final error {}",
                    st.outcome,
                    st.iterations(),
                    fmt_error(st, st.last().error)
                ),
            ));
            checks.push(floor_check("moser-steffensen", ms));
            if spec.id == 2 {
                let sc = st.max_solve_condition();
                checks.push(Check::new(
                    "steffensen max solve-condition > 1e2",
                    sc.is_some_and(|c| c > 1e2),
                    fmt_opt(sc),
                ));
                let mc = ms.max_mult_condition();
                checks.push(Check::new(
                    "moser-steffensen max mult-condition < 30",
                    mc.is_some_and(|c| c < 30.0),
                    fmt_opt(mc),
                ));
            }
        }
        3 => {
            let st = get("steffensen");
            let ms_run = runs
                .iter()
                .find(|r| r.spec.label == "moser-steffensen")
                .expect("run present");
            let ms = &ms_run.trace;
            for (label, t) in [("steffensen", st), ("moser-steffensen", ms)] {
                checks.push(Check::new(
                    format!("{label} converges"),
                    t.outcome == Outcome::Converged,
                    t.outcome.name(),
                ));
            }
            let first_below = ms
                .records
                .iter()
                .find(|r| r.error.is_some_and(|e| e < FLOOR_TARGET))
                .map(|r| r.index);
            checks.push(Check::new(
                "moser-steffensen error < 1e-15 within 7 iterations",
                first_below.is_some_and(|n| n <= 7),
                first_below.map_or_else(|| "never".into(), |n| format!("at n = {n}")),
            ));
            let worst = ms_run
                .spec
                .reference
                .as_ref()
                .and_then(|r| max_reference_ratio(ms, r));
            checks.push(Check::new(
                "moser-steffensen within factor 50 of reference",
                worst.is_some_and(|(_, ratio)| ratio <= 50.0),
                worst.map_or_else(
                    || "no comparable entries".into(),
                    |(n, r)| format!("worst ratio {r:.1} at n = {n}"),
                ),
            ));
            checks.push(Check::new(
                "moser-steffensen COC in [1.8, 2.2]",
                ms_run.coc.is_some_and(|c| (1.8..=2.2).contains(&c)),
                fmt_opt(ms_run.coc),
            ));
        }
        5 => {
            for r in runs {
                checks.push(floor_check(&r.spec.label, &r.trace));
            }
        }
        6 => {
            let ms = get("moser-steffensen");
            checks.push(Check::new(
                "moser-steffensen converges",
                ms.outcome == Outcome::Converged,
                ms.outcome.name(),
            ));
            let ratios = quadratic_ratios(ms, 5);
            checks.push(Check::new(
                "final 5 errors decrease quadratically (ratio spread <= 100)",
                ratios.len() == 4 && spread(&ratios) <= 100.0,
                format!(
                    "e(n+1)/e(n)^2 = [{}]",
                    ratios
                        .iter()
                        .map(|r| format!("{r:.3}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ));
        }
        _ => unreachable!("table ids are validated"),
    }
    checks
}

/// Runs table `id`, fanning its runs across at most `threads` workers.
/// Results are ordered as in the table specification.
pub fn reproduce_table(id: u8, threads: usize) -> Result<TableReport, ReproduceError> {
    let spec = table_spec(id)?;
    let problem = academic_system(spec.epsilon);
    let x0 = DenseVector::from_slice(&spec.x0);
    let threads = threads.max(1);

    let mut results = Vec::with_capacity(spec.runs.len());
    for chunk in spec.runs.chunks(threads) {
        let outcomes: Vec<_> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|r| {
                    let config = spec.config(r);
                    let (problem, x0) = (&problem, &x0);
                    scope.spawn(move || run(problem, x0, &config))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect()
        });
        for (r, outcome) in chunk.iter().zip(outcomes) {
            let trace = outcome.map_err(|source| ReproduceError::Run {
                label: r.label.clone(),
                source,
            })?;
            let coc = estimate_coc(&trace).ok();
            results.push(RunResult {
                spec: r.clone(),
                trace,
                coc,
            });
        }
    }
    let checks = checks_for(&spec, &results);
    Ok(TableReport {
        spec,
        runs: results,
        checks,
    })
}

/// The frozen-matrix Moser update applied `steps` times from `b0`, returning
/// `‖I − BₙA‖` for `n = 0..=steps`.
pub fn frozen_update_defects(a: &DenseMatrix, b0: &DenseMatrix, steps: usize) -> Vec<f64> {
    let id = DenseMatrix::identity(a.dim());
    let mut b = b0.clone();
    let mut out = vec![(&id - &b.matmul(a)).max_norm()];
    for _ in 0..steps {
        b = crate::solver::moser_update(&b, a).0;
        out.push((&id - &b.matmul(a)).max_norm());
    }
    out
}
