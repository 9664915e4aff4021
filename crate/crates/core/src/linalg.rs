//! Thin wrappers over nalgebra for the small dense systems used by the Newton solvers.

use nalgebra::{DMatrix, DVector};

/// Solve a symmetric positive semi-definite system `A x = b` (row-major `A`).
///
/// Tries Cholesky first and falls back to a pseudo-inverse solve, which
/// returns the minimum-norm least-squares solution for singular systems.
pub fn solve_sym(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let rhs = DVector::from_column_slice(b);
    if let Some(ch) = m.clone().cholesky() {
        let x = ch.solve(&rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x.as_slice().to_vec());
        }
    }
    lstsq(n, n, a, b)
}

/// Minimum-norm least-squares solution of `A x = b` for a row-major `rows x cols` matrix.
pub fn lstsq(rows: usize, cols: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(rows, cols, a);
    let rhs = DVector::from_column_slice(b);
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-13).max(f64::MIN_POSITIVE);
    let x = svd.solve(&rhs, eps).ok()?;
    x.iter().all(|v| v.is_finite()).then(|| x.as_slice().to_vec())
}

/// Solve a general square system with partial-pivot LU.
pub fn solve(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let x = m.lu().solve(&DVector::from_column_slice(b))?;
    x.iter().all(|v| v.is_finite()).then(|| x.as_slice().to_vec())
}

/// Orthonormal basis of the complement of the all-ones direction in `R^dim`,
/// returned as `dim - 1` vectors.
pub fn ones_complement_basis(dim: usize) -> Vec<Vec<f64>> {
    // Helmert contrasts: e_1 - e_2, e_1 + e_2 - 2 e_3, ...
    (1..dim)
        .map(|k| {
            let norm = ((k * (k + 1)) as f64).sqrt();
            (0..dim)
                .map(|i| match i.cmp(&k) {
                    std::cmp::Ordering::Less => 1.0 / norm,
                    std::cmp::Ordering::Equal => -(k as f64) / norm,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}
