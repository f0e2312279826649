//! Small dense linear-algebra helpers shared by the filter and the metrics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Pivot floor for SPD factorizations, relative to the largest diagonal entry.
pub const CONDITIONING_TOL: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization that rejects numerically singular matrices.
pub fn spd_factor(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let min_pivot = (0..m.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    (min_pivot >= CONDITIONING_TOL * scale).then_some(chol)
}

/// `vᵀ M⁻¹ v` for an SPD matrix `M`.
pub fn mahalanobis_sq(v: &DVector<f64>, m: &DMatrix<f64>) -> Option<f64> {
    if m.shape() == (1, 1) && v.len() == 1 {
        let s = m[(0, 0)];
        return (s.is_finite() && s > CONDITIONING_TOL).then(|| v[0] * v[0] / s);
    }
    let chol = spd_factor(m)?;
    let w = chol.solve(v);
    Some(v.dot(&w).max(0.0))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().min()
}

/// Direct sum `a ⊕ b`.
pub fn direct_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows();
    let m = a.ncols() + b.ncols();
    let mut out = DMatrix::zeros(n, m);
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

pub(crate) fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("{what} must be square")));
    }
    if max_asymmetry(m) > 1e-10 || min_eigenvalue(m) < -1e-10 {
        return Err(Error::InvalidConfig(format!("{what} must be symmetric PSD")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_sum_places_blocks_on_diagonal() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let b = DMatrix::from_element(1, 1, 3.0);
        let s = direct_sum(&a, &b);
        assert_eq!(s.shape(), (3, 3));
        assert_eq!(s[(2, 2)], 3.0);
        assert_eq!(s[(0, 2)], 0.0);
        assert_eq!(s[(1, 0)], 1.0);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_factor(&m).is_none());
        let v = DVector::from_vec(vec![1.0, 0.0]);
        assert!(mahalanobis_sq(&v, &m).is_none());
    }

    #[test]
    fn mahalanobis_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let v = DVector::from_vec(vec![2.0, 3.0]);
        assert!((mahalanobis_sq(&v, &m).unwrap() - 10.0).abs() < 1e-14);
    }
}
