//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use ms_solve::convergence::{check_conditions, find_radius, ConvergenceConstants};
use ms_solve::divdiff::{divided_difference, secant_defect};
use ms_solve::linalg::{invert, solve_condition};
use ms_solve::ode::{
    chapman_problem, collocation_tableau, default_inner_config, gauss_nodes, gauss_tableau,
    integrate, summarize_chapman, ChapmanParams, ODEProblem, CHAPMAN_DEFAULT_STEP,
};
use ms_solve::registry::{resolve, ProblemParams, PROBLEM_NAMES};
use ms_solve::reproduce::{frozen_update_defects, reproduce_table, TableReport};
use ms_solve::{DenseMatrix, DenseVector, Method, NonlinearProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn failing_checks(report: &TableReport) -> String {
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({})", c.name, c.detail))
        .collect();
    if failed.is_empty() {
        "all checks pass".into()
    } else {
        failed.join("; ")
    }
}

fn golden_constants() -> Verdict {
    let c = ConvergenceConstants::new(1.0, 1.0, 0.75, 0.25, 0.246627, 1.0).unwrap();
    let r = check_conditions(&c);
    let gap = (r.delta0 - r.delta1).abs();
    let checks = [
        ("alpha1", within(r.alpha1, 0.107275, 1e-5)),
        ("alpha_tilde1", within(r.alpha_tilde1, 0.226058, 1e-5)),
        ("d0", within(r.d0, 0.5, 1e-5)),
        ("(1+M+kr)r", within(r.cond1_lhs, 0.554078, 1e-5)),
        ("|delta0-delta1| <= 1e-10", gap <= 1e-10),
        ("cond3 margin", within(r.cond3_margin, 0.0213177, 1e-5)),
    ];
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    (
        failed.is_empty(),
        format!(
            "alpha1 {:.6}, alpha_tilde1 {:.6}, d0 {:.6}, (1+M+kr)r {:.6}, |delta0-delta1| {gap:.3e}, margin {:.7}; failing: [{}]",
            r.alpha1,
            r.alpha_tilde1,
            r.d0,
            r.cond1_lhs,
            r.cond3_margin,
            failed.join(", ")
        ),
    )
}

fn table3_pattern() -> Verdict {
    let report = reproduce_table(3, 2).unwrap();
    (report.passed(), failing_checks(&report))
}

fn stability_pattern() -> Verdict {
    let mut ok = true;
    let mut details = Vec::new();
    for id in [1, 2, 4] {
        let report = reproduce_table(id, 2).unwrap();
        ok &= report.passed();
        details.push(format!("table {id}: {}", failing_checks(&report)));
    }
    (ok, details.join(" | "))
}

fn table6_recovery() -> Verdict {
    let report = reproduce_table(6, 2).unwrap();
    (report.passed(), failing_checks(&report))
}

fn without_jacobian(p: &NonlinearProblem) -> NonlinearProblem {
    let inner = p.clone();
    NonlinearProblem::new("bare", p.dim(), move |x: &DenseVector| {
        inner.eval(x).unwrap()
    })
}

fn divided_difference_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_secant, mut worst_jacobian) = (0.0f64, 0.0f64);
    for name in PROBLEM_NAMES {
        let p = resolve(name, &ProblemParams::default()).unwrap();
        // example3d lives on the unit max-norm ball; the others accept any point.
        let radius = if name == "example3d" { 0.99 } else { 3.0 };
        let sample = |rng: &mut ChaCha8Rng| -> DenseVector {
            (0..p.dim())
                .map(|_| rng.gen_range(-radius..radius))
                .collect()
        };
        for _ in 0..1000 {
            let (u, v) = (sample(&mut rng), sample(&mut rng));
            let scale = 1f64
                .max(p.eval(&u).unwrap().max_norm())
                .max(p.eval(&v).unwrap().max_norm());
            worst_secant = worst_secant.max(secant_defect(&p, &u, &v).unwrap() / scale);
        }
        let bare = without_jacobian(&p);
        for _ in 0..100 {
            let x = sample(&mut rng);
            let analytic = p.jacobian(&x).unwrap().unwrap();
            let dd = divided_difference(&bare, &x, &x).unwrap();
            worst_jacobian =
                worst_jacobian.max((&dd - &analytic).max_norm() / analytic.max_norm().max(1.0));
        }
    }
    (
        worst_secant <= 1e-10 && worst_jacobian <= 1e-6,
        format!("worst secant defect {worst_secant:.2e} (<= 1e-10), worst [x,x;F] vs F' {worst_jacobian:.2e} (<= 1e-6)"),
    )
}

fn contraction_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = f64::NEG_INFINITY;
    let mut trials = 0;
    while trials < 200 {
        let m = rng.gen_range(1..=8);
        let a = DenseMatrix::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        if solve_condition(&a).map_or(true, |c| c > 1e3) {
            continue;
        }
        trials += 1;
        // B₀ = (I − E)A⁻¹ gives I − B₀A = E; E is scaled to norm 0.5.
        let e = DenseMatrix::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let e = e.scale(0.5 / e.max_norm());
        let b0 = (&DenseMatrix::identity(m) - &e).matmul(&invert(&a).unwrap());
        let defects = frozen_update_defects(&a, &b0, 10);
        for w in defects.windows(2) {
            worst = worst.max(w[1] - w[0] * w[0]);
        }
    }
    (
        worst <= 1e-10,
        format!("{trials} random A, max of ||I-B(n+1)A|| - ||I-B(n)A||^2 = {worst:.2e} (<= 1e-10)"),
    )
}

fn gauss_tableau_check() -> Verdict {
    let tab = collocation_tableau(&gauss_nodes(2).unwrap()).unwrap();
    let r = 3f64.sqrt() / 6.0;
    let expected = DenseMatrix::from_rows(&[vec![0.25, 0.25 - r], vec![0.25 + r, 0.25]]);
    let a_err = (&tab.a - &expected).max_norm();
    let b_err = tab.b.iter().map(|b| (b - 0.5).abs()).fold(0.0, f64::max);
    let mut invariant_err = 0.0f64;
    for s in 1..=3 {
        let t = gauss_tableau(s).unwrap();
        for i in 0..s {
            invariant_err = invariant_err.max((t.a.row(i).iter().sum::<f64>() - t.c[i]).abs());
        }
        invariant_err = invariant_err.max((t.b.iter().sum::<f64>() - 1.0).abs());
    }
    (
        a_err <= 1e-12 && b_err <= 1e-12 && invariant_err <= 1e-12,
        format!(
            "A error {a_err:.1e}, b error {b_err:.1e}, row-sum/sum(b) error {invariant_err:.1e}"
        ),
    )
}

fn irk_order() -> Verdict {
    let tab = gauss_tableau(2).unwrap();
    let ode = ODEProblem::new(
        |_, y: &DenseVector| y.scale(-1.0),
        DenseVector::from_slice(&[1.0]),
        (0.0, 1.0),
    )
    .unwrap()
    .with_jacobian(|_, _| DenseMatrix::from_rows(&[vec![-1.0]]));
    let inner = default_inner_config(Method::MoserSteffensen);
    let finals: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&h| integrate(&ode, &tab, h, &inner).unwrap().last_state()[0])
        .collect();
    let order = ((finals[0] - finals[1]) / (finals[1] - finals[2]))
        .abs()
        .log2();
    (
        (order - 4.0).abs() <= 0.3,
        format!("Richardson order {order:.4}"),
    )
}

fn chapman_qualitative() -> Verdict {
    let ode = chapman_problem(ChapmanParams::default()).unwrap();
    let tab = gauss_tableau(2).unwrap();
    let tol = default_inner_config(Method::Newton).residual_tolerance;
    let newton = integrate(
        &ode,
        &tab,
        CHAPMAN_DEFAULT_STEP,
        &default_inner_config(Method::Newton),
    );
    let ms = integrate(
        &ode,
        &tab,
        CHAPMAN_DEFAULT_STEP,
        &default_inner_config(Method::MoserSteffensen),
    );
    let (newton, ms) = match (newton, ms) {
        (Ok(n), Ok(m)) => (n, m),
        (n, m) => {
            return (
                false,
                format!(
                    "integration failed: newton {:?}, moser-steffensen {:?}",
                    n.err(),
                    m.err()
                ),
            )
        }
    };
    let summary = summarize_chapman(&ms);
    // Differences relative to each component's largest magnitude over the run.
    let mut worst = 0.0f64;
    for j in 0..ode.dim {
        let scale = newton
            .component(j)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        for (a, b) in newton.states.iter().zip(&ms.states) {
            worst = worst.max((a[j] - b[j]).abs() / scale);
        }
    }
    let agree = worst <= 10.0 * tol;
    (
        summary.qualitative_pass() && agree,
        format!(
            "h = {CHAPMAN_DEFAULT_STEP} s: y2 rises {}, staircase {}, y1 spikes {}, increasing {}, min y1 {:.3e}, min y2 {:.3e}, positive {}, finite {}; newton vs moser-steffensen {worst:.2e} (<= {:.0e})",
            summary.y2_rises,
            summary.staircase,
            summary.y1_spikes,
            summary.spikes_increasing,
            summary.min_y1,
            summary.min_y2,
            summary.all_positive,
            summary.all_finite,
            10.0 * tol
        ),
    )
}

fn radius_maximality() -> Verdict {
    let Some(r) = find_radius(1.0, 1.0, 0.75, 0.25, 1.0) else {
        return (false, "no radius found".into());
    };
    let at = |r: f64| {
        check_conditions(&ConvergenceConstants::new(1.0, 1.0, 0.75, 0.25, r, 1.0).unwrap())
    };
    let feasible = at(r).all_hold();
    let maximal = !at(r + 1e-6).all_hold();
    let large_enough = r >= 0.246627;
    (
        feasible && maximal && large_enough,
        format!("r* = {r:.10}, conditions hold at r*: {feasible}, fail at r*+1e-6: {maximal}, r* >= 0.246627: {large_enough}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("golden radius constants", golden_constants),
        ("table 3 pattern", table3_pattern),
        ("tables 1/2/4 stability pattern", stability_pattern),
        ("table 6 recovery", table6_recovery),
        ("divided-difference properties", divided_difference_suite),
        ("Moser-family contraction oracle", contraction_oracle),
        ("Gauss tableau", gauss_tableau_check),
        ("IRK order", irk_order),
        ("Chapman qualitative reproduction", chapman_qualitative),
        ("radius maximality", radius_maximality),
    ];
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        passed += usize::from(ok);
        println!(
            "criterion {:>2} {}: {name} [{:.2} s] {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
