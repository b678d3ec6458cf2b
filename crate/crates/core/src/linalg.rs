//! Small dense symmetric-matrix helpers shared by the loss functionals.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{DesignError, Result};

/// Largest condition number accepted before a matrix is declared singular.
pub const CONDITION_LIMIT: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(f64::NAN)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).last().copied().unwrap_or(f64::NAN)
}

/// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = eigenvalues(m);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if lo <= 0.0 || !lo.is_finite() || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky, guarded by
/// [`CONDITION_LIMIT`].
pub fn spd_inverse(m: &DMatrix<f64>, which: &'static str) -> Result<DMatrix<f64>> {
    let s = symmetrize(m);
    let condition = condition_number(&s);
    if condition > CONDITION_LIMIT {
        return Err(DesignError::Singular { which, condition });
    }
    let chol = s
        .cholesky()
        .ok_or(DesignError::Singular { which, condition })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    symmetrize(&(q * DMatrix::from_diagonal(&roots) * q.transpose()))
}

/// Largest eigenvalue of `a * t` for symmetric PSD `a` and symmetric `t`,
/// computed on the similar symmetric matrix `a^{1/2} t a^{1/2}`.
pub fn ch_max_product(a: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let root = sym_sqrt(a);
    max_eigenvalue(&(&root * t * &root))
}

pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// `inv * m * inv`, symmetrized.
pub fn sandwich(inv: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(inv * m * inv))
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ch_max_matches_product_spectrum() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        // eigenvalues of a*t via the 2x2 characteristic polynomial
        let p = &a * &t;
        let tr: f64 = p.trace();
        let det: f64 = p.determinant();
        let top = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
        assert!((ch_max_product(&a, &t) - top).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(spd_inverse(&m, "M"), Err(DesignError::Singular { .. })));
    }

    #[test]
    fn inverse_round_trips() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let inv = spd_inverse(&m, "M").unwrap();
        let id = &m * inv;
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-12);
    }
}
