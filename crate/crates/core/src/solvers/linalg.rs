//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Orthonormal basis of the null space of `b`, as columns.
pub(crate) fn null_space(b: &DMatrix<f64>) -> DMatrix<f64> {
    split_spaces(b, false)
}

/// Orthonormal basis of the row space of `b`, as columns.
pub(crate) fn row_space(b: &DMatrix<f64>) -> DMatrix<f64> {
    split_spaces(b, true)
}

fn split_spaces(b: &DMatrix<f64>, rows: bool) -> DMatrix<f64> {
    let (r, m) = b.shape();
    if m == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sq = if r < m {
        let mut padded = DMatrix::zeros(m, m);
        padded.view_mut((0, 0), (r, m)).copy_from(b);
        padded
    } else {
        b.clone()
    };
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
    let tol = 1e-12 * smax.max(1e-300);
    let cols: Vec<DVector<f64>> = (0..vt.nrows())
        .filter(|&i| (svd.singular_values[i] > tol) == rows)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |x, &s| x.max(s));
    svd.solve(b, 1e-13 * smax.max(1e-300)).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

pub(crate) fn from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}
