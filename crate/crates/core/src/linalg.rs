//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// 2-norm condition number of a symmetric matrix.
pub fn symmetric_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return 1.0;
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive-definite matrix, guarded by a condition limit.
pub fn spd_inverse(m: &DMatrix<f64>, limit: f64) -> Result<DMatrix<f64>> {
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        if v.abs() <= f64::MIN_POSITIVE || !v.is_finite() {
            return Err(Error::SingularInertia {
                condition: f64::INFINITY,
                limit,
            });
        }
        return Ok(DMatrix::from_element(1, 1, 1.0 / v));
    }
    let cond = symmetric_condition(m);
    if !(cond <= limit) {
        return Err(Error::SingularInertia {
            condition: cond,
            limit,
        });
    }
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularInertia {
            condition: cond,
            limit,
        })
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

#[cfg(test)]
pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// In-place rank-one update of a lower Cholesky factor: `L Lᵀ + v vᵀ`.
pub fn cholesky_rank_one_update(l: &mut DMatrix<f64>, v: &mut DVector<f64>) {
    let n = l.nrows();
    for k in 0..n {
        let lkk = l[(k, k)];
        let r = (lkk * lkk + v[k] * v[k]).sqrt();
        let c = r / lkk;
        let s = v[k] / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            l[(i, k)] = (l[(i, k)] + s * v[i]) / c;
            v[i] = c * v[i] - s * l[(i, k)];
        }
    }
}
