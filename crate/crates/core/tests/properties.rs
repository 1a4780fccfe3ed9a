use ms_solve::divdiff::{divided_difference, secant_defect};
use ms_solve::linalg::{invert, lu_solve, mult_condition, solve_condition};
use ms_solve::registry::{academic_system, affine_problem, default_affine, example_3d};
use ms_solve::{DenseMatrix, DenseVector, NonlinearProblem};
use proptest::prelude::*;

/// Diagonally dominant, hence invertible with modest condition.
fn dominant_matrix(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |e| {
        DenseMatrix::from_fn(n, |i, j| {
            if i == j {
                e[i * n + j] + n as f64 + 1.0
            } else {
                e[i * n + j]
            }
        })
    })
}

fn vector(n: usize, r: f64) -> impl Strategy<Value = DenseVector> {
    prop::collection::vec(-r..r, n).prop_map(DenseVector::new)
}

fn without_jacobian(p: &NonlinearProblem) -> NonlinearProblem {
    let inner = p.clone();
    NonlinearProblem::new("bare", p.dim(), move |x: &DenseVector| {
        inner.eval(x).unwrap()
    })
}

fn secant_relative(p: &NonlinearProblem, u: &DenseVector, v: &DenseVector) -> f64 {
    let scale = 1f64
        .max(p.eval(u).unwrap().max_norm())
        .max(p.eval(v).unwrap().max_norm());
    secant_defect(p, u, v).unwrap() / scale
}

fn jacobian_relative(p: &NonlinearProblem, x: &DenseVector) -> f64 {
    let analytic = p.jacobian(x).unwrap().unwrap();
    let dd = divided_difference(&without_jacobian(p), x, x).unwrap();
    (&dd - &analytic).max_norm() / analytic.max_norm().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lu_solve_has_small_residual((a, b) in (1usize..=8).prop_flat_map(|n| (dominant_matrix(n), vector(n, 10.0)))) {
        let x = lu_solve(&a, &b).unwrap();
        prop_assert!((&a.mul_vec(&x) - &b).max_norm() <= 1e-12 * (1.0 + b.max_norm()));
    }

    #[test]
    fn inverse_is_two_sided(a in (1usize..=6).prop_flat_map(dominant_matrix)) {
        let inv = invert(&a).unwrap();
        let id = DenseMatrix::identity(a.dim());
        prop_assert!((&a.matmul(&inv) - &id).max_norm() < 1e-12);
        prop_assert!((&inv.matmul(&a) - &id).max_norm() < 1e-12);
    }

    #[test]
    fn max_norm_is_submultiplicative(
        (a, b) in (1usize..=6).prop_flat_map(|n| (dominant_matrix(n), dominant_matrix(n)))
    ) {
        prop_assert!(a.matmul(&b).max_norm() <= a.max_norm() * b.max_norm() * (1.0 + 1e-15));
        prop_assert!((&a + &b).max_norm() <= a.max_norm() + b.max_norm() + 1e-15);
    }

    #[test]
    fn condition_numbers_are_at_least_one(
        (a, b) in (1usize..=6).prop_flat_map(|n| (dominant_matrix(n), dominant_matrix(n)))
    ) {
        prop_assert!(solve_condition(&a).unwrap() >= 1.0 - 1e-12);
        prop_assert!(mult_condition(&a, &b).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn secant_identity_example3d(u in vector(3, 0.99), v in vector(3, 0.99)) {
        prop_assert!(secant_relative(&example_3d(), &u, &v) <= 1e-10);
    }

    #[test]
    fn secant_identity_academic(eps in prop::sample::select(vec![0.1, 1.0, 2.0, 3.0]), u in vector(2, 3.0), v in vector(2, 3.0)) {
        prop_assert!(secant_relative(&academic_system(eps), &u, &v) <= 1e-10);
    }

    #[test]
    fn secant_identity_affine(a in dominant_matrix(4), b in vector(4, 5.0), u in vector(4, 10.0), v in vector(4, 10.0)) {
        let p = affine_problem(a, b).unwrap();
        prop_assert!(secant_relative(&p, &u, &v) <= 1e-10);
        prop_assert!(secant_relative(&default_affine(), &DenseVector::from_slice(&[u[0], u[1]]), &DenseVector::from_slice(&[v[0], v[1]])) <= 1e-10);
    }

    #[test]
    fn coincident_divided_difference_is_the_jacobian(x3 in vector(3, 0.99), x2 in vector(2, 3.0), eps in 0.1f64..4.0) {
        prop_assert!(jacobian_relative(&example_3d(), &x3) <= 1e-6);
        prop_assert!(jacobian_relative(&academic_system(eps), &x2) <= 1e-6);
        prop_assert!(jacobian_relative(&default_affine(), &x2) <= 1e-6);
    }
}
