//! Thin helpers over nalgebra's dense symmetric routines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix, values ascending, columns of
/// the returned matrix matching the value order.
pub fn sym_eigen_sorted(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = m.symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues_sorted(m: DMatrix<f64>) -> Vec<f64> {
    let ev = m.symmetric_eigenvalues();
    let mut v: Vec<f64> = ev.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Lower Cholesky factor; `what` names the matrix in the error.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    nalgebra::linalg::Cholesky::new(m.clone())
        .map(|c| c.unpack())
        .ok_or(Error::NotPositiveDefinite(what))
}

/// Solve L x = b column-wise for lower-triangular L.
pub fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(b)
        .expect("triangular solve with nonzero diagonal")
}

/// Solve L^T x = b for lower-triangular L.
pub fn solve_lower_transposed(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b)
        .expect("triangular solve with nonzero diagonal")
}

/// All singular values, ascending.
pub fn singular_values_sorted(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sv
}

/// One symmetric scaling pass, D m D with D_i = 1/sqrt(max_j |m_ij|). A
/// congruence, so inertia and kernel dimension are untouched, but the
/// 1/h^3 row scaling a graded mesh puts into assembled operators is
/// flattened enough for a relative eigenvalue threshold to mean the same
/// thing on every row.
pub fn equilibrate_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut d = vec![0.0f64; n];
    for i in 0..n {
        let mut rmax = 0.0f64;
        for j in 0..n {
            rmax = rmax.max(m[(i, j)].abs());
        }
        d[i] = if rmax > 0.0 { 1.0 / rmax.sqrt() } else { 1.0 };
    }
    let mut out = m.clone();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= d[i] * d[j];
        }
    }
    out
}

/// Frobenius norm of the skew part relative to the full norm.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let skew = m - m.transpose();
    let denom = m.norm();
    if denom == 0.0 {
        0.0
    } else {
        0.5 * skew.norm() / denom
    }
}
