//! Dense solvers for the collocation systems.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Solves a square system by LU with partial pivoting; fails on singular
/// matrices or an unreasonably large residual.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Solver(format!(
            "shape mismatch: {}x{} matrix, rhs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Solver("singular collocation matrix".into()))?;
    let resid = (a * &x - b).norm();
    let scale = b.norm().max(1e-300);
    if resid > 1e-6 * scale {
        return Err(Error::Solver(format!(
            "large solve residual {resid:.3e} (rhs norm {scale:.3e})"
        )));
    }
    Ok(x)
}

/// Least-squares solution of a possibly overdetermined system via SVD.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::Solver(format!(
            "shape mismatch: {} rows, rhs {}",
            a.nrows(),
            b.len()
        )));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::Solver("zero matrix in least squares".into()));
    }
    svd.solve(b, smax * 1e-13)
        .map_err(|e| Error::Solver(e.to_string()))
}

/// Spectral condition number estimate via singular values.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &s in sv.iter() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}
