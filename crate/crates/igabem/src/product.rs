//! Exact products of splines in B-spline form.
//!
//! The product of two splines of degrees d1 and d2 is a spline of degree
//! d1 + d2 on the union of the breakpoints, with smoothness at each break
//! equal to the smaller smoothness of the factors. Coefficients on the
//! product knot vector are extracted with the de Boor–Fix functional, using
//! the Leibniz rule for the derivatives of the product.

use crate::error::{Error, Result};
use crate::poly::binomial;
use crate::spline::{
    anchor_for_basis, coefficients_from_ders, DualFunctional, KnotVector, Spline1, Spline2,
};
use nalgebra::DMatrix;

/// Knot vector of the product space of two spline spaces on one interval.
pub fn product_knots(k1: &KnotVector, k2: &KnotVector) -> Result<KnotVector> {
    if (k1.a() - k2.a()).abs() > 1e-12 || (k1.b() - k2.b()).abs() > 1e-12 {
        return Err(Error::Argument(
            "product factors live on different intervals".into(),
        ));
    }
    let d = k1.degree() + k2.degree();
    let mut breaks: Vec<f64> = Vec::new();
    for kv in [k1, k2] {
        for (x, _) in kv.breakpoints() {
            if !breaks.iter().any(|&y: &f64| (y - x).abs() < 1e-12) {
                breaks.push(x);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut vals = Vec::new();
    for (idx, &x) in breaks.iter().enumerate() {
        let mult = if idx == 0 || idx == breaks.len() - 1 {
            d + 1
        } else {
            // smoothness of factor i at x is d_i - m_i (continuity C^{d-m})
            let s1 = k1.degree() as isize - k1.multiplicity(x) as isize;
            let s2 = k2.degree() as isize - k2.multiplicity(x) as isize;
            (d as isize - s1.min(s2)) as usize
        };
        vals.extend(std::iter::repeat(x).take(mult));
    }
    KnotVector::new(vals, d)
}

/// Exact product of two univariate splines.
pub fn multiply_1d(a: &Spline1, b: &Spline1) -> Result<Spline1> {
    let pkv = product_knots(&a.kv, &b.kv)?;
    let coeffs = coefficients_from_ders(&pkv, &[], |tau, r_max| {
        let da = a.eval_ders(tau, r_max);
        let db = b.eval_ders(tau, r_max);
        (0..=r_max)
            .map(|m| {
                (0..=m)
                    .map(|j| binomial(m, j) * da[j] * db[m - j])
                    .sum::<f64>()
            })
            .collect()
    });
    Ok(Spline1::new(pkv, coeffs))
}

/// Matrix of the multiplication operator: column k holds the product-space
/// coefficients of (basis function k of `basis_kv`) times `b`. Returns the
/// product knot vector and the (product dim) x (basis dim) matrix.
pub fn product_matrix_1d(basis_kv: &KnotVector, b: &Spline1) -> Result<(KnotVector, DMatrix<f64>)> {
    let pkv = product_knots(basis_kv, &b.kv)?;
    let d = pkv.degree();
    let db = basis_kv.degree();
    let mut g = DMatrix::zeros(pkv.dim(), basis_kv.dim());
    for r in 0..pkv.dim() {
        let tau = anchor_for_basis(&pkv, r, &[]);
        let lf = DualFunctional::new(&pkv, r, tau);
        let (first, bd) = basis_kv.basis_ders(tau, db)?;
        let sd = b.eval_ders(tau, d);
        for local in 0..=db {
            let k = first + local;
            let mut acc = 0.0;
            for (m, &w) in lf.weights.iter().enumerate() {
                let mut leib = 0.0;
                for j in 0..=m.min(db) {
                    leib += binomial(m, j) * bd[j][local] * sd[m - j];
                }
                acc += w * leib;
            }
            g[(r, k)] = acc;
        }
    }
    Ok((pkv, g))
}

/// Exact product of two bivariate splines (tensor-product de Boor–Fix with
/// the Leibniz rule per direction).
pub fn multiply_2d(a: &Spline2, b: &Spline2) -> Result<Spline2> {
    let pkv1 = product_knots(&a.kv1, &b.kv1)?;
    let pkv2 = product_knots(&a.kv2, &b.kv2)?;
    let (d1, d2) = (pkv1.degree(), pkv2.degree());
    let mut coeffs = DMatrix::zeros(pkv1.dim(), pkv2.dim());
    for r1 in 0..pkv1.dim() {
        let t1 = anchor_for_basis(&pkv1, r1, &[]);
        let l1 = DualFunctional::new(&pkv1, r1, t1);
        for r2 in 0..pkv2.dim() {
            let t2 = anchor_for_basis(&pkv2, r2, &[]);
            let l2 = DualFunctional::new(&pkv2, r2, t2);
            // mixed partials of both factors at the anchor
            let pa: Vec<Vec<f64>> = (0..=d1)
                .map(|m1| (0..=d2).map(|m2| a.eval_deriv(t1, t2, m1, m2)).collect())
                .collect();
            let pb: Vec<Vec<f64>> = (0..=d1)
                .map(|m1| (0..=d2).map(|m2| b.eval_deriv(t1, t2, m1, m2)).collect())
                .collect();
            let mut acc = 0.0;
            for (m1, &w1) in l1.weights.iter().enumerate() {
                for (m2, &w2) in l2.weights.iter().enumerate() {
                    let mut leib = 0.0;
                    for j1 in 0..=m1 {
                        for j2 in 0..=m2 {
                            leib += binomial(m1, j1)
                                * binomial(m2, j2)
                                * pa[j1][j2]
                                * pb[m1 - j1][m2 - j2];
                        }
                    }
                    acc += w1 * w2 * leib;
                }
            }
            coeffs[(r1, r2)] = acc;
        }
    }
    Ok(Spline2::new(pkv1, pkv2, coeffs))
}
