//! Thin wrappers around nalgebra decompositions with the rank conventions
//! used throughout the crate: a singular value (or symmetric eigenvalue
//! magnitude) counts toward the rank iff it exceeds `rel_tol` times the
//! largest one.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

/// Relative singular-value cutoff used by every rank decision in the crate.
pub const RANK_REL_TOL: f64 = 1e-8;

pub fn to_na<S>(a: &ndarray::ArrayBase<S, ndarray::Ix2>) -> DMatrix<f64>
where
    S: ndarray::Data<Elem = f64>,
{
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub fn to_nd(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Numerical rank via SVD.
pub fn svd_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis (columns) of the left null space `{v : v^T M = 0}`.
///
/// The matrix is zero-padded to square so the SVD keeps the full set of left
/// singular vectors rather than the thin factor.
pub fn left_null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    let padded = if m.ncols() < rows {
        m.clone().resize(rows, rows, 0.0)
    } else {
        m.clone()
    };
    let svd = padded.clone().svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let sv = &svd.singular_values;
    let max = sv.max();
    let rank = if max <= 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > rel_tol * max).count()
    };
    let cols: Vec<DVector<f64>> = (rank..u.ncols()).map(|j| u.column(j).into_owned()).collect();
    DMatrix::from_columns(&cols.iter().map(|c| c.column(0)).collect::<Vec<_>>())
}

/// Rank and orthonormal null-space basis of a symmetric matrix.
pub fn sym_rank_null(h: &DMatrix<f64>, rel_tol: f64) -> (usize, DMatrix<f64>) {
    let n = h.nrows();
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut null_cols = Vec::new();
    let mut rank = 0usize;
    for j in 0..n {
        if max > 0.0 && eig.eigenvalues[j].abs() > rel_tol * max {
            rank += 1;
        } else {
            null_cols.push(eig.eigenvectors.column(j).into_owned());
        }
    }
    let null = if null_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&null_cols.iter().map(|c| c.column(0)).collect::<Vec<_>>())
    };
    (rank, null)
}

/// Minimum-norm least-squares solution of `A X = B`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.max();
    let eps = if max > 0.0 { rel_tol * max } else { rel_tol };
    svd.solve(b, eps).expect("svd solve")
}
