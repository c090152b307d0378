//! Small dense helpers shared by the model, density and CLI layers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Builds a matrix from row vectors; all rows must have the same length.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::InvalidDimension(format!(
            "ragged matrix: row of length {} in a matrix with {} columns",
            bad.len(),
            ncols
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn vector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Relative Frobenius asymmetry ‖A − Aᵀ‖ / ‖A‖ (0 for the zero matrix).
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::InvalidDimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = relative_asymmetry(a);
    if asym > 1e-12 {
        return Err(Error::NotSymmetric {
            relative_asymmetry: asym,
        });
    }
    match a.clone().cholesky() {
        Some(c) => Ok(c.l()),
        None => {
            let lambda_min = a.clone().symmetric_eigenvalues().min();
            Err(Error::NotPositiveDefinite { lambda_min })
        }
    }
}

/// log-determinant of an SPD matrix from its lower Cholesky factor.
pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_roundtrip() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let m = matrix_from_rows(&rows).unwrap();
        assert_eq!(m.nrows(), 3);
        assert_eq!(m[(2, 1)], 6.0);
        assert_eq!(matrix_to_rows(&m), rows);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            matrix_from_rows(&rows),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky_lower(&a) {
            Err(Error::NotPositiveDefinite { lambda_min }) => {
                assert!((lambda_min + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_det_matches_determinant() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let l = cholesky_lower(&a).unwrap();
        assert!((log_det_from_cholesky(&l) - 11.0f64.ln()).abs() < 1e-14);
    }
}
