//! Small dense-matrix helpers shared across the crate.
//!
//! The whole library measures matrices in the operator norm induced by the
//! max norm on vectors, i.e. the maximum absolute row sum. Total-variation
//! norms of matrix measures are built on top of this choice.

use nalgebra::{Complex, DMatrix};

pub type CMatrix = DMatrix<Complex<f64>>;

/// Operator infinity-norm: maximum absolute row sum.
pub fn mat_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() {
        let mut s = 0.0;
        for j in 0..m.ncols() {
            s += m[(i, j)].abs();
        }
        best = best.max(s);
    }
    best
}

/// Linear interpolation `(1 - w) * a + w * b`.
pub fn lerp(a: &DMatrix<f64>, b: &DMatrix<f64>, w: f64) -> DMatrix<f64> {
    a * (1.0 - w) + b * w
}

/// Solve `(I - m) x = rhs` column by column, failing if `I - m` is singular.
pub fn solve_i_minus(m: &DMatrix<f64>, rhs: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let a = DMatrix::identity(n, n) - m;
    a.lu().solve(&rhs)
}

pub fn complex_det(m: &CMatrix) -> Complex<f64> {
    m.clone().lu().determinant()
}
