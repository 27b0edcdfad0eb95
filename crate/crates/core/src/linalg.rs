//! Thin wrappers over nalgebra for the small SPD systems used throughout.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) fn spd_factor(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::SingularInformation)
}

pub(crate) fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(spd_factor(m)?.solve(rhs))
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(spd_factor(m)?.inverse())
}

/// Indices of columns that are (numerically) linear combinations of earlier
/// columns, detected by modified Gram-Schmidt on the scaled matrix.
pub(crate) fn collinear_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let (n, p) = m.shape();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut collinear = Vec::new();
    for j in 0..p {
        let mut v = DVector::from_iterator(n, m.column(j).iter().copied());
        let scale = v.norm();
        if scale == 0.0 {
            collinear.push(j);
            continue;
        }
        v /= scale;
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        // Residual norm relative to the (unit) scaled column.
        if v.norm() < 1e-8 {
            collinear.push(j);
        } else {
            let norm = v.norm();
            basis.push(v / norm);
        }
    }
    collinear
}
