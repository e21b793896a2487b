//! Small dense polynomial helpers used by the cubature machinery.
//!
//! Univariate polynomials are coefficient vectors in ascending power order.
//! Bivariate polynomials store `c[a][b]` for the monomial `u^a v^b`.

/// Binomial coefficient as f64; n is small throughout this crate.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Derivative of a univariate polynomial.
pub fn poly_deriv(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| ci * i as f64)
        .collect()
}

/// Re-expands p(x) around x = x0 + y, returning coefficients in y.
pub fn poly_shift(c: &[f64], x0: f64) -> Vec<f64> {
    // Horner-style synthetic shift.
    let mut out = vec![0.0; c.len()];
    for &ci in c.iter().rev() {
        for k in (1..out.len()).rev() {
            out[k] = out[k] * x0 + out[k - 1];
        }
        out[0] = out[0] * x0 + ci;
    }
    out
}

/// Bernstein basis polynomial k of degree n over [a, b], as monomial
/// coefficients in the local variable u = x - origin.
pub fn bernstein_to_monomial(n: usize, k: usize, a: f64, b: f64, origin: f64) -> Vec<f64> {
    // B_k(x) = C(n,k) s^k (1-s)^{n-k},  s = (x - a)/(b - a).
    let len = b - a;
    // s as a polynomial in u: s = (u + (origin - a))/len
    let s = vec![(origin - a) / len, 1.0 / len];
    let one_minus_s = vec![1.0 - (origin - a) / len, -1.0 / len];
    let mut out = vec![binomial(n, k)];
    for _ in 0..k {
        out = poly_mul(&out, &s);
    }
    for _ in 0..(n - k) {
        out = poly_mul(&out, &one_minus_s);
    }
    out
}

/// Bivariate polynomial on the monomials `u^a v^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    /// c[a][b]
    pub c: Vec<Vec<f64>>,
}

impl Poly2 {
    pub fn zero(deg_u: usize, deg_v: usize) -> Self {
        Poly2 {
            c: vec![vec![0.0; deg_v + 1]; deg_u + 1],
        }
    }

    pub fn constant(value: f64) -> Self {
        Poly2 { c: vec![vec![value]] }
    }

    pub fn deg_u(&self) -> usize {
        self.c.len() - 1
    }

    pub fn deg_v(&self) -> usize {
        self.c[0].len() - 1
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let mut acc = 0.0;
        let mut up = 1.0;
        for row in &self.c {
            let mut vp = 1.0;
            let mut r = 0.0;
            for &cab in row {
                r += cab * vp;
                vp *= v;
            }
            acc += r * up;
            up *= u;
        }
        acc
    }

    pub fn mul(&self, other: &Poly2) -> Poly2 {
        let mut out = Poly2::zero(self.deg_u() + other.deg_u(), self.deg_v() + other.deg_v());
        for (a1, row1) in self.c.iter().enumerate() {
            for (b1, &c1) in row1.iter().enumerate() {
                if c1 == 0.0 {
                    continue;
                }
                for (a2, row2) in other.c.iter().enumerate() {
                    for (b2, &c2) in row2.iter().enumerate() {
                        out.c[a1 + a2][b1 + b2] += c1 * c2;
                    }
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Poly2 {
        Poly2 {
            c: self
                .c
                .iter()
                .map(|row| row.iter().map(|&x| x * s).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &Poly2) -> Poly2 {
        let mut out = Poly2::zero(
            self.deg_u().max(other.deg_u()),
            self.deg_v().max(other.deg_v()),
        );
        for (a, row) in self.c.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                out.c[a][b] += v;
            }
        }
        for (a, row) in other.c.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                out.c[a][b] += v;
            }
        }
        out
    }

    /// Outer product of two univariate polynomials p(u) * q(v).
    pub fn from_separable(p: &[f64], q: &[f64]) -> Poly2 {
        Poly2 {
            c: p
                .iter()
                .map(|&pa| q.iter().map(|&qb| pa * qb).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matches_direct_evaluation() {
        let p = vec![1.0, -2.0, 0.5, 3.0];
        let q = poly_shift(&p, 1.7);
        for &y in &[-0.3, 0.0, 0.9] {
            assert!((poly_eval(&p, 1.7 + y) - poly_eval(&q, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn bernstein_partition_of_unity_in_monomial_form() {
        let (a, b, origin) = (0.25, 1.5, 0.8);
        let mut sum = vec![0.0; 4];
        for k in 0..=3 {
            let m = bernstein_to_monomial(3, k, a, b, origin);
            for (i, &ci) in m.iter().enumerate() {
                sum[i] += ci;
            }
        }
        assert!((sum[0] - 1.0).abs() < 1e-13);
        for &c in &sum[1..] {
            assert!(c.abs() < 1e-13);
        }
    }

    #[test]
    fn poly2_mul_eval() {
        let p = Poly2::from_separable(&[1.0, 2.0], &[0.0, 1.0]); // (1+2u) v
        let q = Poly2::from_separable(&[0.0, 1.0], &[1.0]); // u
        let r = p.mul(&q);
        assert!((r.eval(0.5, 0.25) - (1.0 + 1.0) * 0.25 * 0.5).abs() < 1e-14);
    }
}
