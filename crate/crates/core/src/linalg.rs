//! Small dense real linear algebra.
//!
//! Square matrices and vectors stored in plain `Vec<f64>`, the max-norm (and
//! the matrix norm it induces), LU with partial pivoting, and the two
//! condition diagnostics reported by the solvers:
//!
//! - `‖A‖·‖A⁻¹‖` for every linear system that gets solved,
//! - `‖A‖·‖B‖ / ‖AB‖` for every matrix product.

use std::cell::Cell;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::Serialize;
use thiserror::Error;

/// Relative pivot threshold: a pivot is rejected when `|p| < PIVOT_TOL · ‖A‖`.
pub const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("singular matrix: pivot {pivot:e} in column {column} below tolerance")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("degenerate product: ‖A·B‖ = 0")]
    DegenerateProduct,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of LU factorizations performed on the current thread so far.
///
/// Every `lu_solve`, `invert` and `solve_condition` goes through one
/// factorization, so the counter tells whether a code path solved any
/// linear system.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.with(|c| c.get())
}

/// A real vector of dimension `m`.
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn from_slice(entries: &[f64]) -> Self {
        Self(entries.to_vec())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// `max_i |v_i|`.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &DenseVector) -> Self {
        assert_eq!(self.len(), other.len(), "vector dimension mismatch");
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }
}

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl FromIterator<f64> for DenseVector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &DenseVector {
    type Output = DenseVector;
    fn add(self, rhs: &DenseVector) -> DenseVector {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &DenseVector {
    type Output = DenseVector;
    fn sub(self, rhs: &DenseVector) -> DenseVector {
        self.axpy(-1.0, rhs)
    }
}

impl Neg for &DenseVector {
    type Output = DenseVector;
    fn neg(self) -> DenseVector {
        self.scale(-1.0)
    }
}

/// A real `m × m` matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from its rows. Panics if the rows do not form a square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(
            rows.iter().all(|r| r.len() == n),
            "rows must form a square matrix"
        );
        Self {
            n,
            data: rows.concat(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> DenseVector {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &DenseVector) {
        assert_eq!(col.len(), self.n);
        for i in 0..self.n {
            self[(i, j)] = col[i];
        }
    }

    /// Induced max-norm: the largest absolute row sum.
    pub fn max_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mul_vec(&self, v: &DenseVector) -> DenseVector {
        assert_eq!(self.n, v.len(), "matrix-vector dimension mismatch");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n, "matrix dimension mismatch");
        let n = self.n;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        assert_eq!(self.n, other.n, "matrix dimension mismatch");
        DenseMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.n).map(|i| self.row(i)))
            .finish()
    }
}

impl Serialize for DenseMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.matmul(rhs)
    }
}

impl Mul<&DenseVector> for &DenseMatrix {
    type Output = DenseVector;
    fn mul(self, rhs: &DenseVector) -> DenseVector {
        self.mul_vec(rhs)
    }
}

/// `PA = LU` with unit lower `L`; both factors packed in one matrix.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        let n = a.dim();
        let threshold = PIVOT_TOL * a.max_norm();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)]))
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .expect("non-empty pivot range");
            // `!(x >= t)` also rejects NaN pivots.
            if pivot.is_nan() || pivot.abs() < threshold || pivot == 0.0 {
                return Err(LinalgError::SingularMatrix { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu.data[i * n + j] -= factor * lu.data[k * n + j];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector, LinalgError> {
        let n = self.lu.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = (0..i).map(|j| row[j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = (i + 1..n).map(|j| row[j] * x[j]).sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(DenseVector::new(x))
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.lu.dim();
        let mut inv = DenseMatrix::zeros(n);
        for j in 0..n {
            let mut e = DenseVector::zeros(n);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            inv.set_column(j, &col);
        }
        inv
    }
}

/// Solves `A·x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, LinalgError> {
    if a.dim() != b.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    LuFactorization::new(a)?.solve(b)
}

pub fn invert(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    Ok(LuFactorization::new(a)?.inverse())
}

/// `‖A‖·‖A⁻¹‖` in the max-norm.
pub fn solve_condition(a: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(a.max_norm() * invert(a)?.max_norm())
}

/// `‖A‖·‖B‖ / ‖A·B‖` in the max-norm.
pub fn mult_condition(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64, LinalgError> {
    product_condition(a, b, &a.matmul(b))
}

/// Same as [`mult_condition`] when the product has already been formed.
pub fn product_condition(
    a: &DenseMatrix,
    b: &DenseMatrix,
    ab: &DenseMatrix,
) -> Result<f64, LinalgError> {
    let denom = ab.max_norm();
    if denom == 0.0 {
        return Err(LinalgError::DegenerateProduct);
    }
    Ok(a.max_norm() * b.max_norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_slice(x)
    }

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn vector_max_norm() {
        assert_eq!(v(&[0.0, 0.0, 0.0]).max_norm(), 0.0);
        assert_eq!(v(&[-1.0, 1.0]).max_norm(), 1.0);
        assert_eq!(v(&[0.25, -0.5, 0.1]).max_norm(), 0.5);
    }

    #[test]
    fn matrix_max_norm() {
        assert_eq!(DenseMatrix::identity(3).max_norm(), 1.0);
        assert_eq!(m(&[&[1.0, -2.0], &[0.0, 0.5]]).max_norm(), 3.0);
        assert_eq!(DenseMatrix::zeros(4).max_norm(), 0.0);
    }

    #[test]
    fn lu_solve_small_systems() {
        let x = lu_solve(&DenseMatrix::identity(2), &v(&[3.0, 7.0])).unwrap();
        assert_eq!(x, v(&[3.0, 7.0]));

        let x = lu_solve(&DenseMatrix::from_diagonal(&[2.0, 4.0]), &v(&[2.0, 4.0])).unwrap();
        assert_eq!(x, v(&[1.0, 1.0]));

        let a = m(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let b = v(&[3.0, 2.0]);
        let x = lu_solve(&a, &b).unwrap();
        assert!((&a.mul_vec(&x) - &b).max_norm() <= 1e-12);
        assert!((&x - &v(&[1.0, 1.0])).max_norm() <= 1e-12);
    }

    #[test]
    fn lu_needs_pivoting() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let x = lu_solve(&a, &v(&[5.0, 6.0])).unwrap();
        assert_eq!(x, v(&[6.0, 5.0]));
    }

    #[test]
    fn singular_and_mismatch_errors() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(
            lu_solve(&a, &v(&[1.0, 1.0])),
            Err(LinalgError::SingularMatrix { column: 1, .. })
        ));
        assert!(matches!(
            invert(&DenseMatrix::zeros(3)),
            Err(LinalgError::SingularMatrix { .. })
        ));
        assert!(matches!(
            lu_solve(&DenseMatrix::identity(2), &v(&[1.0])),
            Err(LinalgError::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        // relative threshold: tiny but well-scaled matrices are fine
        let tiny = DenseMatrix::identity(2).scale(1e-200);
        assert!(invert(&tiny).is_ok());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(
            invert(&DenseMatrix::identity(3)).unwrap(),
            DenseMatrix::identity(3)
        );
        assert_eq!(
            invert(&DenseMatrix::from_diagonal(&[2.0, 4.0])).unwrap(),
            DenseMatrix::from_diagonal(&[0.5, 0.25])
        );
        let a = m(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let inv = invert(&a).unwrap();
        assert!((&inv - &m(&[&[1.0, -1.0], &[-1.0, 2.0]])).max_norm() <= 1e-12);
        assert!((&a.matmul(&inv) - &DenseMatrix::identity(2)).max_norm() <= 1e-12);
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(solve_condition(&DenseMatrix::identity(3)).unwrap(), 1.0);
        assert_eq!(
            solve_condition(&DenseMatrix::from_diagonal(&[10.0, 0.1])).unwrap(),
            100.0
        );
        let c = solve_condition(&m(&[&[2.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert!((c - 9.0).abs() <= 1e-12);

        let i = DenseMatrix::identity(2);
        assert_eq!(mult_condition(&i, &i).unwrap(), 1.0);
        let c = mult_condition(
            &DenseMatrix::from_diagonal(&[2.0, 2.0]),
            &DenseMatrix::from_diagonal(&[3.0, 3.0]),
        )
        .unwrap();
        assert_eq!(c, 1.0);
        let eps = 0.1;
        let c = mult_condition(
            &DenseMatrix::from_diagonal(&[1.0, eps]),
            &DenseMatrix::from_diagonal(&[eps, 1.0]),
        )
        .unwrap();
        assert!((c - 10.0).abs() <= 1e-12);

        let a = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let b = m(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(mult_condition(&a, &b), Err(LinalgError::DegenerateProduct));
    }

    #[test]
    fn factorizations_are_counted() {
        let before = factorization_count();
        let _ = invert(&DenseMatrix::identity(2));
        let _ = lu_solve(&DenseMatrix::identity(2), &v(&[1.0, 2.0]));
        assert_eq!(factorization_count(), before + 2);
    }
}
