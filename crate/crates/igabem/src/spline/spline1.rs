//! Univariate splines in B-spline form and the de Boor–Fix dual functional.

use super::knots::KnotVector;
use crate::error::{Error, Result};
use crate::poly::{poly_deriv, poly_mul};

/// A univariate spline: knot vector plus coefficient vector.
#[derive(Debug, Clone)]
pub struct Spline1 {
    pub kv: KnotVector,
    pub coeffs: Vec<f64>,
}

impl Spline1 {
    pub fn new(kv: KnotVector, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), kv.dim());
        Spline1 { kv, coeffs }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (first, vals) = self.kv.basis(t).expect("t outside spline domain");
        vals.iter()
            .enumerate()
            .map(|(j, v)| v * self.coeffs[first + j])
            .sum()
    }

    /// Derivative of order r (0 allowed); orders above the degree return 0.
    pub fn eval_deriv(&self, t: f64, r: usize) -> f64 {
        if r > self.kv.degree() {
            return 0.0;
        }
        let (first, ders) = self.kv.basis_ders(t, r).expect("t outside spline domain");
        ders[r]
            .iter()
            .enumerate()
            .map(|(j, v)| v * self.coeffs[first + j])
            .sum()
    }

    /// All derivatives 0..=r at once.
    pub fn eval_ders(&self, t: f64, r: usize) -> Vec<f64> {
        let d = self.kv.degree();
        let (first, ders) = self
            .kv
            .basis_ders(t, r.min(d))
            .expect("t outside spline domain");
        let mut out = vec![0.0; r + 1];
        for (k, row) in ders.iter().enumerate() {
            out[k] = row
                .iter()
                .enumerate()
                .map(|(j, v)| v * self.coeffs[first + j])
                .sum();
        }
        out
    }

    /// Exact integral over the whole interval.
    pub fn integral(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * self.kv.basis_integral(i))
            .sum()
    }

    /// Re-expresses the spline after inserting one knot.
    pub fn insert_knot(&self, u: f64) -> Result<Spline1> {
        let (kv, coeffs) = self.kv.insert_knot(&self.coeffs, u)?;
        Ok(Spline1 { kv, coeffs })
    }

    /// Piecewise Bernstein form: one (a, b, coefficients) triple per
    /// nonempty breakpoint span, obtained by raising every interior
    /// breakpoint to multiplicity = degree via knot insertion.
    pub fn bernstein_segments(&self) -> Vec<(f64, f64, Vec<f64>)> {
        let d = self.kv.degree();
        let mut s = self.clone();
        let bps: Vec<(f64, usize)> = self.kv.breakpoints();
        for &(x, m) in &bps[1..bps.len() - 1] {
            for _ in m..d {
                s = s.insert_knot(x).expect("insertion to Bernstein form");
            }
        }
        // Now every interior breakpoint has multiplicity >= d, so the d+1
        // coefficients active on a span are that span's Bernstein ordinates.
        let mut out = Vec::new();
        let breaks: Vec<f64> = s.kv.breakpoints().iter().map(|&(x, _)| x).collect();
        for w in breaks.windows(2) {
            let span = s.kv.find_span(0.5 * (w[0] + w[1])).unwrap();
            let start = span - d;
            out.push((w[0], w[1], s.coeffs[start..start + d + 1].to_vec()));
        }
        out
    }
}

/// The de Boor–Fix dual functional for basis index i of `kv`, anchored at
/// `tau`:  lambda_i(f) = (1/d!) sum_r (-1)^r psi^(d-r)(tau) f^(r)(tau), with
/// psi(y) = prod_k (y - t_{i+k}).  Exact on the spline space for any tau in
/// the interior of a span of supp(B_i) where f is smooth.
#[derive(Debug, Clone)]
pub struct DualFunctional {
    pub tau: f64,
    /// weight[r] multiplies f^(r)(tau)
    pub weights: Vec<f64>,
}

impl DualFunctional {
    pub fn new(kv: &KnotVector, i: usize, tau: f64) -> Self {
        let d = kv.degree();
        let vals = kv.values();
        // psi in powers of (y - tau)
        let mut psi = vec![1.0];
        for k in 1..=d {
            psi = poly_mul(&psi, &[tau - vals[i + k], 1.0]);
        }
        // ders[m] = psi^(m)(tau): the constant term of the m-th derivative
        // in powers of (y - tau).
        let mut ders = vec![0.0; d + 1];
        let mut p = psi;
        for der in ders.iter_mut() {
            *der = p[0];
            p = poly_deriv(&p);
        }
        let mut weights = vec![0.0; d + 1];
        let mut dfact = 1.0;
        for k in 2..=d.max(1) {
            dfact *= k as f64;
        }
        for r in 0..=d {
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            weights[r] = sign * ders[d - r] / dfact;
        }
        DualFunctional { tau, weights }
    }

    /// Applies the functional given derivative values f^(r)(tau).
    pub fn apply(&self, ders_at_tau: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(ders_at_tau)
            .map(|(w, f)| w * f)
            .sum()
    }
}

/// Picks an anchor for basis i of `kv`: the midpoint of the widest span of
/// the support, optionally restricted to spans of a finer breakpoint set.
pub fn anchor_for_basis(kv: &KnotVector, i: usize, extra_breaks: &[f64]) -> f64 {
    let d = kv.degree();
    let vals = kv.values();
    let (lo, hi) = (vals[i], vals[i + d + 1]);
    let mut breaks: Vec<f64> = vals[i..=i + d + 1].to_vec();
    breaks.extend(extra_breaks.iter().copied().filter(|&x| x > lo && x < hi));
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    // widest span, ties broken toward the support center (symmetric anchors
    // on uniform meshes keep the induced cubature superconvergent)
    let center = 0.5 * (lo + hi);
    let mut best = (0.0, f64::INFINITY, center);
    for w in breaks.windows(2) {
        let width = w[1] - w[0];
        let mid = 0.5 * (w[0] + w[1]);
        let off = (mid - center).abs();
        if width > best.0 * (1.0 + 1e-9) || (width > best.0 * (1.0 - 1e-9) && off < best.1) {
            best = (width, off, mid);
        }
    }
    best.2
}

/// Computes the B-spline coefficients on `kv` of a piecewise-polynomial
/// function given by its derivatives, via the de Boor–Fix functional.
///
/// `ders(tau, r_max)` must return derivatives 0..=r_max of the target at tau;
/// the target must coincide with a spline on `kv` for the result to be exact.
pub fn coefficients_from_ders<F>(kv: &KnotVector, extra_breaks: &[f64], ders: F) -> Vec<f64>
where
    F: Fn(f64, usize) -> Vec<f64>,
{
    let d = kv.degree();
    (0..kv.dim())
        .map(|i| {
            let tau = anchor_for_basis(kv, i, extra_breaks);
            let lf = DualFunctional::new(kv, i, tau);
            lf.apply(&ders(tau, d))
        })
        .collect()
}

/// Restriction of global basis function `j` of `kv` to its support, as a
/// spline on the local clamped knot vector.
pub fn local_bspline(kv: &KnotVector, j: usize) -> Result<Spline1> {
    let d = kv.degree();
    let vals = kv.values();
    let (lo, hi) = (vals[j], vals[j + d + 1]);
    if hi <= lo {
        return Err(Error::Argument("basis function with empty support".into()));
    }
    let mut local = vec![lo; d + 1];
    for &v in &vals[j + 1..j + d + 1] {
        if v > lo && v < hi {
            local.push(v);
        }
    }
    local.extend(std::iter::repeat(hi).take(d + 1));
    let local_kv = KnotVector::new(local, d)?;
    let global = kv.clone();
    let coeffs = coefficients_from_ders(&local_kv, &[], |tau, r| {
        let (first, ders) = global.basis_ders(tau, r).expect("tau inside support");
        (0..=r)
            .map(|k| {
                if j >= first && j <= first + d {
                    ders[k.min(d)][j - first]
                } else {
                    0.0
                }
            })
            .collect()
    });
    Ok(Spline1::new(local_kv, coeffs))
}
