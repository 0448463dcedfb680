use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const MAX_CONDITION: f64 = 1e12;

/// Ratio of extreme singular values; infinite for singular matrices.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(crate) fn checked_inverse(m: &DMatrix<f64>, what: &'static str, time: usize) -> Result<DMatrix<f64>> {
    let cond = condition_number(m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned { what, time, cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { what, time, cond })
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::config(format!("{what}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
