//! Derivative-free spline quasi-interpolation from point samples.
//!
//! The operator combines the de Boor–Fix dual functional with local
//! polynomial interpolation of degree p + 1 on p + 2 consecutive nodes, so
//! every spline coefficient is a short linear combination of function values.
//! Integrating the resulting spline gives a cubature rule with one weight per
//! node; the rule integrates smooth integrands at order p + 2.

use crate::error::{Error, Result};
use crate::poly::poly_mul;
use crate::spline::{anchor_for_basis, DualFunctional, KnotVector, Spline1, Spline2};
use nalgebra::DMatrix;

/// A univariate quasi-interpolation operator: samples at `nodes` in, spline
/// on `kv` out.
#[derive(Debug, Clone)]
pub struct QiOperator {
    kv: KnotVector,
    nodes: Vec<f64>,
    /// rows[i] = (first node index, weights): coefficient i of the output
    /// spline is the dot product of the weights with the node samples.
    rows: Vec<(usize, Vec<f64>)>,
}

impl QiOperator {
    /// Builds the operator of degree `p` on strictly increasing `nodes`,
    /// which double as the breakpoints of the output spline space.
    pub fn new(nodes: &[f64], p: usize) -> Result<Self> {
        if nodes.len() < p + 2 {
            return Err(Error::Argument(format!(
                "quasi-interpolation of degree {p} needs at least {} nodes, got {}",
                p + 2,
                nodes.len()
            )));
        }
        let kv = KnotVector::clamped_on_nodes(nodes, p)?;
        let window = p + 2;
        let n = nodes.len();
        let mut rows = Vec::with_capacity(kv.dim());
        for i in 0..kv.dim() {
            let tau = anchor_for_basis(&kv, i, &[]);
            let lf = DualFunctional::new(&kv, i, tau);
            // window of p + 2 consecutive nodes centered on tau
            let j = nodes.partition_point(|&x| x < tau);
            let start = j.saturating_sub(window / 2).min(n - window);
            let xs = &nodes[start..start + window];
            // weights[m] = sum_r lf.weights[r] * L_m^(r)(tau)
            let mut weights = vec![0.0; window];
            for (m, w) in weights.iter_mut().enumerate() {
                // Lagrange cardinal polynomial in powers of (y - tau)
                let mut lp = vec![1.0];
                for (k, &xk) in xs.iter().enumerate() {
                    if k != m {
                        let scale = 1.0 / (xs[m] - xk);
                        lp = poly_mul(&lp, &[(tau - xk) * scale, scale]);
                    }
                }
                let mut rfact = 1.0;
                for (r, &lw) in lf.weights.iter().enumerate() {
                    if r > 0 {
                        rfact *= r as f64;
                    }
                    if r < lp.len() {
                        *w += lw * rfact * lp[r];
                    }
                }
            }
            rows.push((start, weights));
        }
        Ok(QiOperator {
            kv,
            nodes: nodes.to_vec(),
            rows,
        })
    }

    /// Uniform nodes on [a, b].
    pub fn uniform(a: f64, b: f64, n_nodes: usize, p: usize) -> Result<Self> {
        let nodes: Vec<f64> = (0..n_nodes)
            .map(|k| a + (b - a) * k as f64 / (n_nodes - 1) as f64)
            .collect();
        QiOperator::new(&nodes, p)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn knots(&self) -> &KnotVector {
        &self.kv
    }

    /// Output coefficients for the given node samples.
    pub fn coefficients(&self, samples: &[f64]) -> Vec<f64> {
        assert_eq!(samples.len(), self.nodes.len());
        self.rows
            .iter()
            .map(|(start, w)| {
                w.iter()
                    .zip(&samples[*start..])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Applies the operator to a function, returning the spline.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> Spline1 {
        let samples: Vec<f64> = self.nodes.iter().map(|&x| f(x)).collect();
        Spline1::new(self.kv.clone(), self.coefficients(&samples))
    }

    /// Dense matrix view Q with coeffs = Q * samples.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.kv.dim(), self.nodes.len());
        for (i, (start, w)) in self.rows.iter().enumerate() {
            for (k, &v) in w.iter().enumerate() {
                q[(i, start + k)] = v;
            }
        }
        q
    }

    /// Cubature weights: integral of the quasi-interpolant equals the dot
    /// product of these weights with the node samples.
    pub fn integration_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (i, (start, row)) in self.rows.iter().enumerate() {
            let bi = self.kv.basis_integral(i);
            for (k, &v) in row.iter().enumerate() {
                w[start + k] += bi * v;
            }
        }
        w
    }
}

/// Tensor-product application: samples[(k, l)] at (op1.nodes[k], op2.nodes[l])
/// produce a bivariate spline with coefficients Q1 * samples * Q2^T.
pub fn apply_2d(op1: &QiOperator, op2: &QiOperator, samples: &DMatrix<f64>) -> Spline2 {
    assert_eq!(samples.nrows(), op1.nodes.len());
    assert_eq!(samples.ncols(), op2.nodes.len());
    let coeffs = op1.matrix() * samples * op2.matrix().transpose();
    Spline2::new(op1.kv.clone(), op2.kv.clone(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_constants_and_degree_p_polynomials() {
        let op = QiOperator::uniform(-1.0, 2.0, 13, 2).unwrap();
        let s1 = op.apply(|_| 1.0);
        let s2 = op.apply(|t| t * t - 0.5 * t);
        for q in 0..=60 {
            let t = -1.0 + 3.0 * q as f64 / 60.0;
            assert!((s1.eval(t) - 1.0).abs() < 1e-14);
            assert!((s2.eval(t) - (t * t - 0.5 * t)).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn cubic_reproduction_with_cubic_operator() {
        let op = QiOperator::uniform(0.0, 1.0, 9, 3).unwrap();
        let f = |t: f64| t * t * t - 2.0 * t + 1.0;
        let s = op.apply(f);
        for q in 0..=40 {
            let t = q as f64 / 40.0;
            assert!((s.eval(t) - f(t)).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn approximation_order_on_sine() {
        // L-inf error should drop at order p + 1 = 3
        let mut errs = Vec::new();
        for &n in &[17usize, 33, 65, 129] {
            let op = QiOperator::uniform(0.0, 1.0, n, 2).unwrap();
            let s = op.apply(|t| (3.0 * t).sin());
            let mut e = 0.0f64;
            for q in 0..=500 {
                let t = q as f64 / 500.0;
                e = e.max((s.eval(t) - (3.0 * t).sin()).abs());
            }
            errs.push(e);
        }
        for w in errs.windows(2) {
            let eoc = (w[0] / w[1]).log2();
            assert!((2.7..=3.3).contains(&eoc), "eoc {eoc}");
        }
    }

    #[test]
    fn integration_superconvergence() {
        // cubature error on exp should drop at order p + 2 = 4
        let exact = 1.0f64.exp() - 1.0;
        let mut errs = Vec::new();
        for &n in &[17usize, 33, 65] {
            let op = QiOperator::uniform(0.0, 1.0, n, 2).unwrap();
            let w = op.integration_weights();
            let quad: f64 = op
                .nodes()
                .iter()
                .zip(&w)
                .map(|(&x, &wt)| wt * x.exp())
                .sum();
            errs.push((quad - exact).abs());
        }
        for w in errs.windows(2) {
            let eoc = (w[0] / w[1]).log2();
            assert!(eoc >= 3.7, "eoc {eoc}");
        }
    }

    #[test]
    fn integration_weights_match_spline_integral() {
        let op = QiOperator::uniform(-1.0, 1.0, 13, 2).unwrap();
        let f = |t: f64| (t + 0.3).cos();
        let s = op.apply(f);
        let w = op.integration_weights();
        let quad: f64 = op.nodes().iter().zip(&w).map(|(&x, &wt)| wt * f(x)).sum();
        assert!((quad - s.integral()).abs() < 1e-14);
    }

    #[test]
    fn tensor_application_reproduces_biquadratic() {
        let op1 = QiOperator::uniform(0.0, 1.0, 13, 2).unwrap();
        let op2 = QiOperator::uniform(-1.0, 1.0, 7, 2).unwrap();
        let f = |a: f64, b: f64| (a * a + 1.0) * (b * b - b);
        let mut samples = DMatrix::zeros(13, 7);
        for (k, &x) in op1.nodes().iter().enumerate() {
            for (l, &y) in op2.nodes().iter().enumerate() {
                samples[(k, l)] = f(x, y);
            }
        }
        let s = apply_2d(&op1, &op2, &samples);
        for q in 0..=10 {
            for r in 0..=10 {
                let a = q as f64 / 10.0;
                let b = -1.0 + 2.0 * r as f64 / 10.0;
                assert!((s.eval(a, b) - f(a, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_are_local() {
        let op = QiOperator::uniform(0.0, 1.0, 25, 2).unwrap();
        for (_, w) in &op.rows {
            assert_eq!(w.len(), 4);
        }
    }
}
