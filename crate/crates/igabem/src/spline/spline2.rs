//! Tensor-product spline spaces and bivariate splines.

use super::knots::KnotVector;
use nalgebra::DMatrix;

/// Tensor-product spline space: a knot vector per parametric direction with
/// the flattened basis indexing j = i2 * (m1 + 1) + i1.
#[derive(Debug, Clone)]
pub struct TensorSplineSpace {
    pub kv1: KnotVector,
    pub kv2: KnotVector,
}

impl TensorSplineSpace {
    pub fn new(kv1: KnotVector, kv2: KnotVector) -> Self {
        TensorSplineSpace { kv1, kv2 }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.kv1.dim(), self.kv2.dim())
    }

    pub fn dim(&self) -> usize {
        self.kv1.dim() * self.kv2.dim()
    }

    /// Flattened index of the (i1, i2) basis pair.
    pub fn flat(&self, i1: usize, i2: usize) -> usize {
        i2 * self.kv1.dim() + i1
    }

    pub fn unflat(&self, j: usize) -> (usize, usize) {
        (j % self.kv1.dim(), j / self.kv1.dim())
    }

    /// Mesh size h = max(h1, h2).
    pub fn mesh_size(&self) -> f64 {
        self.kv1.mesh_size().max(self.kv2.mesh_size())
    }

    /// Support rectangle of basis function j.
    pub fn support(&self, j: usize) -> [[f64; 2]; 2] {
        let (i1, i2) = self.unflat(j);
        let (d1, d2) = (self.kv1.degree(), self.kv2.degree());
        [
            [self.kv1.values()[i1], self.kv1.values()[i1 + d1 + 1]],
            [self.kv2.values()[i2], self.kv2.values()[i2 + d2 + 1]],
        ]
    }

    pub fn refine_dyadic(&self) -> TensorSplineSpace {
        TensorSplineSpace {
            kv1: self.kv1.refine_dyadic(),
            kv2: self.kv2.refine_dyadic(),
        }
    }

    /// Basis value of flattened index j at t.
    pub fn basis_value(&self, j: usize, t: [f64; 2]) -> f64 {
        let (i1, i2) = self.unflat(j);
        let v1 = {
            let (f, vals) = self.kv1.basis(t[0]).expect("t1 in domain");
            if i1 >= f && i1 <= f + self.kv1.degree() {
                vals[i1 - f]
            } else {
                0.0
            }
        };
        let v2 = {
            let (f, vals) = self.kv2.basis(t[1]).expect("t2 in domain");
            if i2 >= f && i2 <= f + self.kv2.degree() {
                vals[i2 - f]
            } else {
                0.0
            }
        };
        v1 * v2
    }

    /// Value of the spline with flattened coefficient vector `coeffs` at t.
    pub fn value(&self, coeffs: &nalgebra::DVector<f64>, t: [f64; 2]) -> f64 {
        let (f1, v1) = self.kv1.basis(t[0]).expect("t1 in domain");
        let (f2, v2) = self.kv2.basis(t[1]).expect("t2 in domain");
        let (m1, _) = self.dims();
        let mut acc = 0.0;
        for (k2, &b2) in v2.iter().enumerate() {
            for (k1, &b1) in v1.iter().enumerate() {
                acc += coeffs[(f2 + k2) * m1 + f1 + k1] * b1 * b2;
            }
        }
        acc
    }
}

/// A bivariate spline on a tensor-product knot structure; `coeffs[(k, l)]`
/// multiplies basis k in direction 1 and l in direction 2.
#[derive(Debug, Clone)]
pub struct Spline2 {
    pub kv1: KnotVector,
    pub kv2: KnotVector,
    pub coeffs: DMatrix<f64>,
}

impl Spline2 {
    pub fn new(kv1: KnotVector, kv2: KnotVector, coeffs: DMatrix<f64>) -> Self {
        assert_eq!(coeffs.nrows(), kv1.dim());
        assert_eq!(coeffs.ncols(), kv2.dim());
        Spline2 { kv1, kv2, coeffs }
    }

    pub fn eval(&self, t1: f64, t2: f64) -> f64 {
        let (f1, v1) = self.kv1.basis(t1).expect("t1 in domain");
        let (f2, v2) = self.kv2.basis(t2).expect("t2 in domain");
        let mut acc = 0.0;
        for (a, &b1) in v1.iter().enumerate() {
            for (b, &b2) in v2.iter().enumerate() {
                acc += b1 * b2 * self.coeffs[(f1 + a, f2 + b)];
            }
        }
        acc
    }

    /// Mixed partial derivative of order (r1, r2).
    pub fn eval_deriv(&self, t1: f64, t2: f64, r1: usize, r2: usize) -> f64 {
        if r1 > self.kv1.degree() || r2 > self.kv2.degree() {
            return 0.0;
        }
        let (f1, d1) = self.kv1.basis_ders(t1, r1).expect("t1 in domain");
        let (f2, d2) = self.kv2.basis_ders(t2, r2).expect("t2 in domain");
        let mut acc = 0.0;
        for (a, &b1) in d1[r1].iter().enumerate() {
            for (b, &b2) in d2[r2].iter().enumerate() {
                acc += b1 * b2 * self.coeffs[(f1 + a, f2 + b)];
            }
        }
        acc
    }

    /// Piecewise Bernstein form: one (rectangle, coefficient block) pair per
    /// nonempty element, with block entry (k, l) the Bernstein ordinate of
    /// index k in direction 1 and l in direction 2.
    pub fn bezier_elements(&self) -> Vec<([[f64; 2]; 2], DMatrix<f64>)> {
        let ext = BezierExtraction::new(&self.kv1, &self.kv2);
        let full = ext.apply(&self.coeffs);
        let (d1, d2) = (ext.d1, ext.d2);
        let mut out = Vec::new();
        for (e1, w1) in ext.breaks1.windows(2).enumerate() {
            for (e2, w2) in ext.breaks2.windows(2).enumerate() {
                let block = full
                    .view((ext.starts1[e1], ext.starts2[e2]), (d1 + 1, d2 + 1))
                    .into_owned();
                out.push(([[w1[0], w1[1]], [w2[0], w2[1]]], block));
            }
        }
        out
    }

    /// Exact integral over the full rectangle.
    pub fn integral(&self) -> f64 {
        let i1: Vec<f64> = (0..self.kv1.dim()).map(|i| self.kv1.basis_integral(i)).collect();
        let i2: Vec<f64> = (0..self.kv2.dim()).map(|i| self.kv2.basis_integral(i)).collect();
        let mut acc = 0.0;
        for (k, &w1) in i1.iter().enumerate() {
            for (l, &w2) in i2.iter().enumerate() {
                acc += w1 * w2 * self.coeffs[(k, l)];
            }
        }
        acc
    }
}

/// Precomputed Bezier extraction of a tensor-product coefficient grid:
/// knot-insertion operators raising every interior breakpoint to full
/// multiplicity, reusable across coefficient sets on the same knots.
#[derive(Debug, Clone)]
pub struct BezierExtraction {
    pub d1: usize,
    pub d2: usize,
    /// element breakpoints per direction
    pub breaks1: Vec<f64>,
    pub breaks2: Vec<f64>,
    /// insertion operators; Bernstein grid = t1 * coeffs * t2^T
    pub t1: DMatrix<f64>,
    pub t2: DMatrix<f64>,
    /// row offset of each element's (degree+1) ordinate block
    pub starts1: Vec<usize>,
    pub starts2: Vec<usize>,
}

fn insertion_operator(kv: &KnotVector) -> (Vec<f64>, DMatrix<f64>, Vec<usize>) {
    let d = kv.degree();
    let n = kv.dim();
    let mut cur = kv.clone();
    // identity columns carried through the insertion chain
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            c
        })
        .collect();
    let bps = kv.breakpoints();
    for &(x, m) in &bps[1..bps.len() - 1] {
        for _ in m..d {
            let mut next_kv = cur.clone();
            for c in cols.iter_mut() {
                let (nkv, nc) = cur.insert_knot(c, x).expect("insertion");
                next_kv = nkv;
                *c = nc;
            }
            cur = next_kv;
        }
    }
    let breaks: Vec<f64> = cur.breakpoints().iter().map(|&(x, _)| x).collect();
    let starts: Vec<usize> = breaks
        .windows(2)
        .map(|w| cur.find_span(0.5 * (w[0] + w[1])).unwrap() - d)
        .collect();
    let t = DMatrix::from_fn(cols[0].len(), n, |r, j| cols[j][r]);
    (breaks, t, starts)
}

impl BezierExtraction {
    pub fn new(kv1: &KnotVector, kv2: &KnotVector) -> Self {
        let (breaks1, t1, starts1) = insertion_operator(kv1);
        let (breaks2, t2, starts2) = insertion_operator(kv2);
        BezierExtraction {
            d1: kv1.degree(),
            d2: kv2.degree(),
            breaks1,
            breaks2,
            t1,
            t2,
            starts1,
            starts2,
        }
    }

    /// Full Bernstein ordinate grid of a coefficient matrix.
    pub fn apply(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        &self.t1 * coeffs * self.t2.transpose()
    }
}
