//! Extended (clamped) knot vectors and B-spline basis evaluation.

use crate::error::{Error, Result};

/// A clamped extended knot vector together with the spline degree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    values: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    /// Validates the clamping and monotonicity invariants.
    pub fn new(values: Vec<f64>, degree: usize) -> Result<Self> {
        let d = degree;
        if values.len() < 2 * (d + 1) {
            return Err(Error::Config(format!(
                "knot vector of length {} too short for degree {}",
                values.len(),
                d
            )));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("knot values must be nondecreasing".into()));
        }
        let a = values[0];
        let b = *values.last().unwrap();
        if b <= a {
            return Err(Error::Config("degenerate knot interval".into()));
        }
        let first_mult = values.iter().take_while(|&&v| v == a).count();
        let last_mult = values.iter().rev().take_while(|&&v| v == b).count();
        if first_mult != d + 1 || last_mult != d + 1 {
            return Err(Error::Config(format!(
                "knot vector must be clamped with end multiplicity {}",
                d + 1
            )));
        }
        let kv = KnotVector { values, degree };
        for (_, m) in kv.breakpoints() {
            if m > d + 1 {
                return Err(Error::Config("interior multiplicity exceeds degree + 1".into()));
            }
        }
        Ok(kv)
    }

    /// Uniform clamped knot vector with the given breakpoint count
    /// (`segments + 1` breakpoints including the interval ends).
    pub fn uniform(a: f64, b: f64, segments: usize, degree: usize) -> Self {
        let mut values = vec![a; degree + 1];
        for k in 1..segments {
            values.push(a + (b - a) * k as f64 / segments as f64);
        }
        values.extend(std::iter::repeat(b).take(degree + 1));
        KnotVector { values, degree }
    }

    /// Clamped knot vector on the given node sequence (used by the QI
    /// operator); nodes must be strictly increasing and include both ends.
    pub fn clamped_on_nodes(nodes: &[f64], degree: usize) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Config("need at least two nodes".into()));
        }
        let mut values = vec![nodes[0]; degree + 1];
        values.extend_from_slice(&nodes[1..nodes.len() - 1]);
        values.extend(std::iter::repeat(nodes[nodes.len() - 1]).take(degree + 1));
        KnotVector::new(values, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn a(&self) -> f64 {
        self.values[0]
    }

    pub fn b(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.values.len() - self.degree - 1
    }

    /// Distinct breakpoints with multiplicities.
    pub fn breakpoints(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some((x, m)) if *x == v => *m += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// Maximal distance between successive knots.
    pub fn mesh_size(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Multiplicity of `x` as a knot (0 if absent).
    pub fn multiplicity(&self, x: f64) -> usize {
        self.values.iter().filter(|&&v| v == x).count()
    }

    /// Index of the knot span containing t: largest i with t_i <= t < t_{i+1}
    /// (the last nonempty span for t = b).
    pub fn find_span(&self, t: f64) -> Result<usize> {
        let d = self.degree;
        let n = self.dim() - 1;
        if t < self.a() || t > self.b() {
            return Err(Error::OutOfDomain {
                value: t,
                a: self.a(),
                b: self.b(),
            });
        }
        if t >= self.values[n + 1] {
            // rightmost nonempty span
            let mut i = n;
            while self.values[i] == self.values[i + 1] {
                i -= 1;
            }
            return Ok(i);
        }
        let mut lo = d;
        let mut hi = n + 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.values[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Nonzero basis values at t: returns the first basis index and the d+1
    /// values B_{first}, ..., B_{first+d}.
    pub fn basis(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        let (first, ders) = self.basis_ders(t, 0)?;
        Ok((first, ders.into_iter().next().unwrap()))
    }

    /// Nonzero basis values and derivatives up to `max_order` at t.
    ///
    /// Returns (first_index, ders) with ders[k][j] the k-th derivative of
    /// basis function first_index + j. Orders above the degree are zero.
    pub fn basis_ders(&self, t: f64, max_order: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let d = self.degree;
        let span = self.find_span(t)?;
        let kn = &self.values;
        // Cox–de Boor triangle with knot differences (NURBS book A2.3).
        let mut ndu = vec![vec![0.0; d + 1]; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        ndu[0][0] = 1.0;
        for j in 1..=d {
            left[j] = t - kn[span + 1 - j];
            right[j] = kn[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = if ndu[j][r] != 0.0 { ndu[r][j - 1] / ndu[j][r] } else { 0.0 };
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; d + 1]; max_order + 1];
        for j in 0..=d {
            ders[0][j] = ndu[j][d];
        }
        let n = max_order.min(d);
        let mut a = vec![vec![0.0; d + 1]; 2];
        for r in 0..=d {
            let mut s1 = 0usize;
            let mut s2 = 1usize;
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut dv = 0.0;
                let rk = r as isize - k as isize;
                let pk = (d - k) as isize;
                if r >= k {
                    a[s2][0] = if ndu[(pk + 1) as usize][rk as usize] != 0.0 {
                        a[s1][0] / ndu[(pk + 1) as usize][rk as usize]
                    } else {
                        0.0
                    };
                    dv = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk { k - 1 } else { d - r };
                for j in j1..=j2 {
                    a[s2][j] = if ndu[(pk + 1) as usize][(rk + j as isize) as usize] != 0.0 {
                        (a[s1][j] - a[s1][j - 1]) / ndu[(pk + 1) as usize][(rk + j as isize) as usize]
                    } else {
                        0.0
                    };
                    dv += a[s2][j] * ndu[(rk + j as isize) as usize][pk as usize];
                }
                if r <= pk as usize {
                    a[s2][k] = if ndu[(pk + 1) as usize][r] != 0.0 {
                        -a[s1][k - 1] / ndu[(pk + 1) as usize][r]
                    } else {
                        0.0
                    };
                    dv += a[s2][k] * ndu[r][pk as usize];
                }
                ders[k][r] = dv;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut rfac = d as f64;
        for k in 1..=n {
            for j in 0..=d {
                ders[k][j] *= rfac;
            }
            rfac *= (d - k) as f64;
        }
        Ok((span - d, ders))
    }

    /// Greville abscissas; with `improved` the first and last abscissa are
    /// shifted inward by the fraction `beta` of the adjacent gap.
    pub fn greville(&self, improved: bool, beta: f64) -> Result<Vec<f64>> {
        let d = self.degree;
        if improved && !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("beta {beta} outside [0, 1)")));
        }
        let mut xs: Vec<f64> = (0..self.dim())
            .map(|i| {
                if d == 0 {
                    0.5 * (self.values[i] + self.values[i + 1])
                } else {
                    self.values[i + 1..i + 1 + d].iter().sum::<f64>() / d as f64
                }
            })
            .collect();
        if improved && xs.len() >= 2 {
            let m = xs.len();
            xs[0] += beta * (xs[1] - xs[0]);
            xs[m - 1] -= beta * (xs[m - 1] - xs[m - 2]);
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "coincident collocation abscissas; use per-segment Greville or improved shift".into(),
            ));
        }
        Ok(xs)
    }

    /// Greville abscissas computed per clamped segment.
    ///
    /// Interior knots of multiplicity degree + 1 decouple the spline into
    /// independent clamped pieces (the rational sub-patches of a closed
    /// geometry); abscissas are generated segment by segment so the improved
    /// shift keeps them distinct across segment boundaries.
    pub fn greville_segmented(&self, improved: bool, beta: f64) -> Result<Vec<f64>> {
        let segments = self.split_at_full_multiplicity()?;
        if segments.len() == 1 {
            return self.greville(improved, beta);
        }
        let mut out = Vec::with_capacity(self.dim());
        for seg in &segments {
            out.extend(seg.greville(improved, beta)?);
        }
        if out.len() != self.dim() || out.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "segmented Greville abscissas are not strictly increasing".into(),
            ));
        }
        Ok(out)
    }

    /// Splits the knot vector at interior knots of multiplicity degree + 1
    /// into independent clamped pieces. Returns a single element when no such
    /// knot exists.
    pub fn split_at_full_multiplicity(&self) -> Result<Vec<KnotVector>> {
        let d = self.degree;
        let bps = self.breakpoints();
        let cuts: Vec<f64> = bps[1..bps.len() - 1]
            .iter()
            .filter(|&&(_, m)| m == d + 1)
            .map(|&(x, _)| x)
            .collect();
        if cuts.is_empty() {
            return Ok(vec![self.clone()]);
        }
        let mut bounds = vec![self.a()];
        bounds.extend(cuts);
        bounds.push(self.b());
        let mut out = Vec::new();
        for w in bounds.windows(2) {
            let mut vals = vec![w[0]; d + 1];
            for &v in &self.values {
                if v > w[0] && v < w[1] {
                    vals.push(v);
                }
            }
            vals.extend(std::iter::repeat(w[1]).take(d + 1));
            out.push(KnotVector::new(vals, d)?);
        }
        Ok(out)
    }

    /// Exact integral of basis function i over [a, b]:
    /// (t_{i+d+1} - t_i) / (d + 1).
    pub fn basis_integral(&self, i: usize) -> f64 {
        let d = self.degree;
        (self.values[i + d + 1] - self.values[i]) / (d + 1) as f64
    }

    /// Inserts a simple knot at the midpoint of every nonempty span.
    pub fn refine_dyadic(&self) -> KnotVector {
        let mut values = Vec::with_capacity(self.values.len() * 2);
        for w in self.values.windows(2) {
            values.push(w[0]);
            if w[1] > w[0] {
                values.push(0.5 * (w[0] + w[1]));
            }
        }
        values.push(self.b());
        KnotVector {
            values,
            degree: self.degree,
        }
    }

    /// Knot vector with the multiplicity of every interior knot reduced by
    /// one (used to build the C^0 continuity variant of the trial space).
    pub fn reduce_interior_multiplicity(&self) -> Result<KnotVector> {
        let d = self.degree;
        let mut values = vec![self.a(); d + 1];
        for (x, m) in self.breakpoints() {
            if x > self.a() && x < self.b() {
                values.extend(std::iter::repeat(x).take(m - 1));
            }
        }
        values.extend(std::iter::repeat(self.b()).take(d + 1));
        KnotVector::new(values, d)
    }

    /// Merges additional simple knots (each must lie strictly inside the
    /// interval; duplicates raise multiplicity).
    pub fn with_inserted(&self, extra: &[f64]) -> Result<KnotVector> {
        let mut values = self.values.clone();
        for &x in extra {
            if x <= self.a() || x >= self.b() {
                return Err(Error::Config(format!("knot {x} outside open interval")));
            }
            let pos = values.partition_point(|&v| v <= x);
            values.insert(pos, x);
        }
        KnotVector::new(values, self.degree)
    }

    /// Boehm knot insertion acting on a coefficient vector: returns the
    /// refined knot vector and coefficients representing the same spline.
    pub fn insert_knot(&self, coeffs: &[f64], u: f64) -> Result<(KnotVector, Vec<f64>)> {
        let d = self.degree;
        assert_eq!(coeffs.len(), self.dim());
        if u <= self.a() || u >= self.b() {
            return Err(Error::Argument("inserted knot must be interior".into()));
        }
        if self.multiplicity(u) >= d {
            return Err(Error::Argument(
                "knot already at multiplicity degree; insertion would break continuity".into(),
            ));
        }
        let span = self.find_span(u)?;
        let mut new_values = self.values.clone();
        new_values.insert(span + 1, u);
        let mut out = Vec::with_capacity(coeffs.len() + 1);
        out.extend_from_slice(&coeffs[..=span - d]);
        for i in (span - d + 1)..=span {
            let denom = self.values[i + d] - self.values[i];
            let alpha = if denom > 0.0 { (u - self.values[i]) / denom } else { 0.0 };
            out.push((1.0 - alpha) * coeffs[i - 1] + alpha * coeffs[i]);
        }
        out.extend_from_slice(&coeffs[span..]);
        Ok((
            KnotVector {
                values: new_values,
                degree: d,
            },
            out,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(vals: &[f64], d: usize) -> KnotVector {
        KnotVector::new(vals.to_vec(), d).unwrap()
    }

    #[test]
    fn degree_zero_indicator() {
        let k = kv(&[0.0, 1.0], 0);
        let (first, vals) = k.basis(0.5).unwrap();
        assert_eq!(first, 0);
        assert_eq!(vals, vec![1.0]);
    }

    #[test]
    fn quadratic_bernstein_midpoint() {
        let k = kv(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2);
        let (first, vals) = k.basis(0.5).unwrap();
        assert_eq!(first, 0);
        for (v, e) in vals.iter().zip([0.25, 0.5, 0.25]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn partition_of_unity_uniform() {
        let k = kv(&[0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 4.0, 4.0], 2);
        for &t in &[0.1, 1.0, 1.7, 2.5, 3.9, 4.0] {
            let (_, vals) = k.basis(t).unwrap();
            let s: f64 = vals.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "t={t}");
            assert!(vals.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let k = kv(&[0.0, 0.0, 0.0, 0.0, 0.7, 1.3, 2.0, 2.0, 2.0, 2.0], 3);
        let h = 1e-6;
        for &t in &[0.3, 0.9, 1.7] {
            let (f0, d1) = k.basis_ders(t, 1).unwrap();
            let (fa, va) = k.basis(t - h).unwrap();
            let (fb, vb) = k.basis(t + h).unwrap();
            assert_eq!(fa, fb);
            assert_eq!(f0, fa);
            for j in 0..=3 {
                let fd = (vb[j] - va[j]) / (2.0 * h);
                let scale = d1[1][j].abs().max(1.0);
                assert!((d1[1][j] - fd).abs() < 1e-6 * scale, "t={t} j={j}");
            }
        }
    }

    #[test]
    fn greville_examples() {
        let k = kv(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2);
        assert_eq!(k.greville(false, 0.0).unwrap(), vec![0.0, 0.5, 1.0]);
        let imp = k.greville(true, 0.25).unwrap();
        for (v, e) in imp.iter().zip([0.125, 0.5, 0.875]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn greville_matches_averaging_oracle() {
        let k = kv(&[0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.9, 1.5, 1.5, 1.5, 1.5], 3);
        let g = k.greville(false, 0.0).unwrap();
        let vals = k.values();
        for (i, &x) in g.iter().enumerate() {
            let avg: f64 = (1..=3).map(|j| vals[i + j]).sum::<f64>() / 3.0;
            assert!((x - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn basis_integrals() {
        let k = kv(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2);
        for i in 0..3 {
            assert!((k.basis_integral(i) - 1.0 / 3.0).abs() < 1e-15);
        }
        let k2 = kv(&[0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 4.0, 4.0], 2);
        let total: f64 = (0..k2.dim()).map(|i| k2.basis_integral(i)).sum();
        assert!((total - 4.0).abs() < 1e-14);
        // interior uniform B-spline with span h: integral = h
        assert!((k2.basis_integral(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_refinement_counts() {
        let k = kv(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2);
        assert_eq!(k.dim(), 3);
        let r = k.refine_dyadic();
        assert_eq!(r.dim(), 4);
        assert_eq!(
            r.breakpoints().iter().map(|&(x, _)| x).collect::<Vec<_>>(),
            vec![0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn torus_t2_c0_space_refined_three_times_has_dim_37() {
        // geometry knot vector on [-1, 1] with maximal interior multiplicity,
        // reduced by one to the C^0 variant: dim 9, then 13, 21, 37
        let t2 = kv(
            &[-1.0, -1.0, -1.0, -0.5, -0.5, -0.5, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0],
            2,
        );
        let mut s = t2.reduce_interior_multiplicity().unwrap();
        assert_eq!(s.dim(), 9);
        for expect in [13, 21, 37] {
            s = s.refine_dyadic();
            assert_eq!(s.dim(), expect);
        }
    }

    #[test]
    fn insertion_reproduces_spline() {
        let k = kv(&[0.0, 0.0, 0.0, 0.5, 1.3, 2.0, 2.0, 2.0], 2);
        let coeffs = vec![0.3, -1.0, 2.0, 0.7, 0.1];
        let eval = |kvv: &KnotVector, c: &[f64], t: f64| {
            let (first, vals) = kvv.basis(t).unwrap();
            vals.iter()
                .enumerate()
                .map(|(j, v)| v * c[first + j])
                .sum::<f64>()
        };
        let (k2, c2) = k.insert_knot(&coeffs, 0.9).unwrap();
        let (k3, c3) = k2.insert_knot(&c2, 1.7).unwrap();
        for i in 0..=100 {
            let t = 2.0 * i as f64 / 100.0;
            let e = (eval(&k, &coeffs, t) - eval(&k3, &c3, t)).abs();
            assert!(e < 1e-13, "t={t} err={e}");
        }
    }

    #[test]
    fn segmented_greville_for_full_multiplicity_interior() {
        let k = kv(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0], 2);
        assert!(k.greville(false, 0.0).is_err()); // duplicate abscissa at 1
        let seg = k.greville_segmented(true, 0.5).unwrap();
        assert_eq!(seg.len(), k.dim());
        assert!(seg.windows(2).all(|w| w[1] > w[0]));
    }
}
