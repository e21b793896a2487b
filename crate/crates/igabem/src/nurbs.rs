//! Single-patch NURBS surfaces: evaluation with partial derivatives up to
//! order three, the area element, geometry file I/O, and the exact torus and
//! saddle-screen constructions used by the experiments.

use crate::error::{Error, Result};
use crate::poly::binomial;
use crate::spline::KnotVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Point and partial-derivative data of the surface map at one parameter.
#[derive(Debug, Clone)]
pub struct SurfaceSample {
    /// partials[r1][r2] = d^{r1+r2} F / dt1^{r1} dt2^{r2}; entries with
    /// r1 + r2 > max_order are zeroed.
    pub partials: Vec<Vec<[f64; 3]>>,
    pub max_order: usize,
}

impl SurfaceSample {
    pub fn point(&self) -> [f64; 3] {
        self.partials[0][0]
    }

    pub fn du(&self) -> [f64; 3] {
        self.partials[1][0]
    }

    pub fn dv(&self) -> [f64; 3] {
        self.partials[0][1]
    }

    /// Infinitesimal area element J = |F_t1 x F_t2|.
    pub fn area_element(&self) -> f64 {
        let a = self.du();
        let b = self.dv();
        let c = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }
}

/// A tensor-product NURBS patch; control points are stored in homogeneous
/// form (w x, w y, w z, w), row-major with direction 1 fastest.
#[derive(Debug, Clone)]
pub struct NurbsSurface {
    kv1: KnotVector,
    kv2: KnotVector,
    ctrl: Vec<[f64; 4]>,
    periodic: [bool; 2],
}

impl NurbsSurface {
    pub fn new(
        kv1: KnotVector,
        kv2: KnotVector,
        control_points: Vec<[f64; 3]>,
        weights: Vec<f64>,
        periodic: [bool; 2],
    ) -> Result<Self> {
        let (n1, n2) = (kv1.dim(), kv2.dim());
        if control_points.len() != n1 * n2 || weights.len() != n1 * n2 {
            return Err(Error::Geometry(format!(
                "control grid size {} does not match knot dimensions {}x{}",
                control_points.len(),
                n1,
                n2
            )));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Geometry("weights must be strictly positive".into()));
        }
        let ctrl = control_points
            .iter()
            .zip(&weights)
            .map(|(p, &w)| [w * p[0], w * p[1], w * p[2], w])
            .collect();
        Ok(NurbsSurface {
            kv1,
            kv2,
            ctrl,
            periodic,
        })
    }

    pub fn kv1(&self) -> &KnotVector {
        &self.kv1
    }

    pub fn kv2(&self) -> &KnotVector {
        &self.kv2
    }

    pub fn periodic(&self) -> [bool; 2] {
        self.periodic
    }

    pub fn domain(&self) -> [[f64; 2]; 2] {
        [[self.kv1.a(), self.kv1.b()], [self.kv2.a(), self.kv2.b()]]
    }

    /// Wraps a parameter into the domain along periodic directions.
    pub fn wrap(&self, t: [f64; 2]) -> [f64; 2] {
        let dom = self.domain();
        let mut out = t;
        for k in 0..2 {
            if self.periodic[k] {
                let len = dom[k][1] - dom[k][0];
                let mut x = (t[k] - dom[k][0]).rem_euclid(len) + dom[k][0];
                if x < dom[k][0] {
                    x += len;
                }
                out[k] = x;
            }
        }
        out
    }

    /// Shifts `s` by whole periods so it is as close as possible to the
    /// reference rectangle (periodic directions only).
    pub fn unwrap_towards(&self, s: [f64; 2], rect: [[f64; 2]; 2]) -> [f64; 2] {
        let dom = self.domain();
        let mut out = s;
        for k in 0..2 {
            if self.periodic[k] {
                let len = dom[k][1] - dom[k][0];
                let center = 0.5 * (rect[k][0] + rect[k][1]);
                let shift = ((center - s[k]) / len).round();
                out[k] = s[k] + shift * len;
            }
        }
        out
    }

    /// Evaluates the surface with all partials of total order <= max_order
    /// (max_order <= 3), by quotient differentiation of the homogeneous form.
    pub fn eval(&self, t: [f64; 2], max_order: usize) -> Result<SurfaceSample> {
        assert!(max_order <= 3);
        let t = self.wrap(t);
        let (d1, d2) = (self.kv1.degree(), self.kv2.degree());
        let (f1, b1) = self.kv1.basis_ders(t[0], max_order.min(d1))?;
        let (f2, b2) = self.kv2.basis_ders(t[1], max_order.min(d2))?;
        let n1 = self.kv1.dim();
        // homogeneous partials A[r1][r2] (numerator xyz and weight)
        let mut hom = vec![vec![[0.0f64; 4]; max_order + 1]; max_order + 1];
        for (r1, row1) in b1.iter().enumerate() {
            for (r2, row2) in b2.iter().enumerate() {
                if r1 + r2 > max_order {
                    continue;
                }
                let acc = &mut hom[r1][r2];
                for (a, &v1) in row1.iter().enumerate() {
                    for (b, &v2) in row2.iter().enumerate() {
                        let c = &self.ctrl[(f2 + b) * n1 + (f1 + a)];
                        let s = v1 * v2;
                        for k in 0..4 {
                            acc[k] += s * c[k];
                        }
                    }
                }
            }
        }
        let w00 = hom[0][0][3];
        if !(w00 > 0.0) || !w00.is_finite() {
            return Err(Error::Geometry(format!(
                "nonpositive NURBS denominator {w00} at ({}, {})",
                t[0], t[1]
            )));
        }
        // rational derivatives by the generalized quotient rule
        let mut partials = vec![vec![[0.0f64; 3]; max_order + 1]; max_order + 1];
        for total in 0..=max_order {
            for r1 in 0..=total {
                let r2 = total - r1;
                if r1 > max_order || r2 > max_order {
                    continue;
                }
                let mut v = hom[r1][r2];
                for b1i in 0..=r1 {
                    for b2i in 0..=r2 {
                        if b1i == 0 && b2i == 0 {
                            continue;
                        }
                        let c = binomial(r1, b1i) * binomial(r2, b2i);
                        let wd = hom[b1i][b2i][3];
                        let fp = partials[r1 - b1i][r2 - b2i];
                        for k in 0..3 {
                            v[k] -= c * wd * fp[k];
                        }
                    }
                }
                for k in 0..3 {
                    partials[r1][r2][k] = v[k] / w00;
                }
            }
        }
        Ok(SurfaceSample {
            partials,
            max_order,
        })
    }

    /// Point on the surface.
    pub fn point(&self, t: [f64; 2]) -> Result<[f64; 3]> {
        Ok(self.eval(t, 0)?.point())
    }

    /// Point and area element.
    pub fn point_and_area(&self, t: [f64; 2]) -> Result<([f64; 3], f64)> {
        let s = self.eval(t, 1)?;
        Ok((s.point(), s.area_element()))
    }
}

// ---------------------------------------------------------------------------
// geometry file format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct GeometryFile {
    degrees: [usize; 2],
    knots_u: Vec<f64>,
    knots_v: Vec<f64>,
    /// row-major grid of [x, y, z, w], direction u fastest
    control_points: Vec<[f64; 4]>,
    periodic: [bool; 2],
}

impl NurbsSurface {
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.ctrl.len();
        let mut control_points = Vec::with_capacity(n);
        for c in &self.ctrl {
            let w = c[3];
            control_points.push([c[0] / w, c[1] / w, c[2] / w, w]);
        }
        let file = GeometryFile {
            degrees: [self.kv1.degree(), self.kv2.degree()],
            knots_u: self.kv1.values().to_vec(),
            knots_v: self.kv2.values().to_vec(),
            control_points,
            periodic: self.periodic,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: GeometryFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let kv1 = KnotVector::new(file.knots_u, file.degrees[0])?;
        let kv2 = KnotVector::new(file.knots_v, file.degrees[1])?;
        let points: Vec<[f64; 3]> = file
            .control_points
            .iter()
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let weights: Vec<f64> = file.control_points.iter().map(|c| c[3]).collect();
        NurbsSurface::new(kv1, kv2, points, weights, file.periodic)
    }
}

// ---------------------------------------------------------------------------
// reference geometries
// ---------------------------------------------------------------------------

/// Control polygon of a full circle of radius r as four rational quadratic
/// 90-degree arcs in independent Bernstein segments (12 points), starting at
/// angle `start_deg` and traversing counterclockwise. Returns (xy, weights).
fn circle_polygon(r: f64, start_deg: f64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut pts = Vec::with_capacity(12);
    let mut wts = Vec::with_capacity(12);
    let w_mid = 0.5f64.sqrt();
    for arc in 0..4 {
        let a0 = (start_deg + 90.0 * arc as f64).to_radians();
        let a1 = a0 + 90f64.to_radians();
        let am = 0.5 * (a0 + a1);
        pts.push([r * a0.cos(), r * a0.sin()]);
        wts.push(1.0);
        let rm = r * 2.0f64.sqrt();
        pts.push([rm * am.cos(), rm * am.sin()]);
        wts.push(w_mid);
        pts.push([r * a1.cos(), r * a1.sin()]);
        wts.push(1.0);
    }
    (pts, wts)
}

/// Knot vector of the four-arc circle over [a, b] with maximal interior
/// multiplicity.
fn circle_knots(a: f64, b: f64) -> Vec<f64> {
    let q = |k: f64| a + (b - a) * k / 4.0;
    let mut v = vec![a, a, a];
    for k in 1..4 {
        v.extend_from_slice(&[q(k as f64); 3]);
    }
    v.extend_from_slice(&[b, b, b]);
    v
}

/// Exact torus of major radius `rho_major` and minor radius `rho_minor`,
/// parameterized over [-3, 3] x [-1, 1] with biquadratic rational arcs.
///
/// The major angle starts at 180 degrees so the seam t1 = +-3 sits on the
/// negative x axis; the surface satisfies
/// (sqrt(x^2 + y^2) - rho_major)^2 + z^2 = rho_minor^2 exactly.
pub fn torus(rho_major: f64, rho_minor: f64) -> NurbsSurface {
    let kv1 = KnotVector::new(circle_knots(-3.0, 3.0), 2).unwrap();
    let kv2 = KnotVector::new(circle_knots(-1.0, 1.0), 2).unwrap();
    // unit circle polygon for the sweep (major direction)
    let (major_pts, major_w) = circle_polygon(1.0, 180.0);
    // generatrix: minor circle in the (radial, z) plane centered (rho_major, 0);
    // the tangent-intersection corner of each arc is center + sqrt(2) r u,
    // which circle_polygon already provides relative to the origin.
    let (minor_unit, minor_w) = circle_polygon(rho_minor, 0.0);
    let minor_pts: Vec<[f64; 2]> = minor_unit
        .iter()
        .map(|p| [rho_major + p[0], p[1]])
        .collect();
    let mut points = Vec::with_capacity(144);
    let mut weights = Vec::with_capacity(144);
    for (mp, &mw) in minor_pts.iter().zip(&minor_w) {
        let (radial, z) = (mp[0], mp[1]);
        for (up, &uw) in major_pts.iter().zip(&major_w) {
            points.push([radial * up[0], radial * up[1], z]);
            weights.push(uw * mw);
        }
    }
    NurbsSurface::new(kv1, kv2, points, weights, [true, true]).unwrap()
}

/// The saddle screen F(t1, t2) = (t1, t2, t1^2 - t2^2) on [-1, 1]^2 as a
/// biquadratic patch with unit weights.
pub fn screen() -> NurbsSurface {
    let kv = KnotVector::new(vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0], 2).unwrap();
    // Bernstein ordinates on [-1, 1]: t -> (-1, 0, 1), t^2 -> (1, -1, 1)
    let lin = [-1.0, 0.0, 1.0];
    let sq = [1.0, -1.0, 1.0];
    let mut points = Vec::with_capacity(9);
    for j in 0..3 {
        for i in 0..3 {
            points.push([lin[i], lin[j], sq[i] - sq[j]]);
        }
    }
    NurbsSurface::new(kv.clone(), kv, points, vec![1.0; 9], [false, false]).unwrap()
}

/// Flat unit patch F(t1, t2) = (t1, t2, 0) on the given rectangle; used by
/// oracles and tests.
pub fn flat_patch(rect: [[f64; 2]; 2]) -> NurbsSurface {
    let kv1 = KnotVector::new(
        vec![rect[0][0], rect[0][0], rect[0][1], rect[0][1]],
        1,
    )
    .unwrap();
    let kv2 = KnotVector::new(
        vec![rect[1][0], rect[1][0], rect[1][1], rect[1][1]],
        1,
    )
    .unwrap();
    let xs = [rect[0][0], rect[0][1]];
    let ys = [rect[1][0], rect[1][1]];
    let mut points = Vec::with_capacity(4);
    for j in 0..2 {
        for i in 0..2 {
            points.push([xs[i], ys[j], 0.0]);
        }
    }
    NurbsSurface::new(kv1, kv2, points, vec![1.0; 4], [false, false]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn screen_sample_at_origin() {
        let s = screen();
        let smp = s.eval([0.0, 0.0], 1).unwrap();
        let p = smp.point();
        assert!(p.iter().all(|&x| x.abs() < 1e-14));
        assert!((smp.area_element() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn screen_area_element_formula() {
        // J = |(-2 t1, 2 t2, 1)| for the saddle
        let s = screen();
        for &(t1, t2) in &[(0.3, -0.7), (-0.9, 0.2), (0.5, 0.5)] {
            let smp = s.eval([t1, t2], 1).unwrap();
            let expect = (4.0 * t1 * t1 + 4.0 * t2 * t2 + 1.0f64).sqrt();
            assert!((smp.area_element() - expect).abs() < 1e-13);
            let p = smp.point();
            assert!((p[2] - (t1 * t1 - t2 * t2)).abs() < 1e-14);
        }
    }

    #[test]
    fn torus_satisfies_implicit_equation() {
        let t = torus(3.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let t1 = rng.gen_range(-3.0..3.0);
            let t2 = rng.gen_range(-1.0..1.0);
            let p = t.point([t1, t2]).unwrap();
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let res = ((r - 3.0).powi(2) + p[2] * p[2] - 1.0).abs();
            assert!(res <= 1e-12, "residual {res} at ({t1}, {t2})");
        }
    }

    #[test]
    fn torus_seam_faces_negative_x() {
        let t = torus(3.0, 1.0);
        let p = t.point([-3.0, 0.0]).unwrap();
        assert!(p[0] < 0.0 && p[1].abs() < 1e-12);
    }

    #[test]
    fn circle_arc_points_exact() {
        // along t2 = -1 the minor angle is 0, so the trace is the outer
        // equator: a circle of radius 4 in the z = 0 plane
        let t = torus(3.0, 1.0);
        for k in 0..=40 {
            let t1 = -3.0 + 6.0 * k as f64 / 40.0;
            let p = t.point([t1, -1.0 + 1e-14]).unwrap();
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 4.0).abs() < 1e-12, "t1={t1} r={r}");
            assert!(p[2].abs() < 1e-12);
        }
        // halfway through the minor sweep (t2 = 0) sits the inner equator
        let p = t.point([0.9, 0.0]).unwrap();
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(p[2].abs() < 1e-12);
    }

    #[test]
    fn equal_weights_reduce_to_polynomial_spline() {
        let s = screen();
        // compare against direct polynomial evaluation
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t1 = rng.gen_range(-1.0..1.0);
            let t2 = rng.gen_range(-1.0..1.0);
            let p = s.point([t1, t2]).unwrap();
            assert!((p[0] - t1).abs() < 1e-14);
            assert!((p[1] - t2).abs() < 1e-14);
            assert!((p[2] - (t1 * t1 - t2 * t2)).abs() < 1e-13);
        }
    }

    #[test]
    fn torus_partials_match_finite_differences() {
        let t = torus(3.0, 1.0);
        let h = 1e-5;
        let at = [0.37, -0.23];
        let smp = t.eval(at, 3).unwrap();
        for (r1, r2) in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)] {
            let num = match (r1, r2) {
                (1, 0) => {
                    let a = t.point([at[0] + h, at[1]]).unwrap();
                    let b = t.point([at[0] - h, at[1]]).unwrap();
                    [0, 1, 2].map(|k| (a[k] - b[k]) / (2.0 * h))
                }
                (0, 1) => {
                    let a = t.point([at[0], at[1] + h]).unwrap();
                    let b = t.point([at[0], at[1] - h]).unwrap();
                    [0, 1, 2].map(|k| (a[k] - b[k]) / (2.0 * h))
                }
                (1, 1) => {
                    let pp = t.point([at[0] + h, at[1] + h]).unwrap();
                    let pm = t.point([at[0] + h, at[1] - h]).unwrap();
                    let mp = t.point([at[0] - h, at[1] + h]).unwrap();
                    let mm = t.point([at[0] - h, at[1] - h]).unwrap();
                    [0, 1, 2].map(|k| (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h))
                }
                (2, 0) => {
                    let a = t.point([at[0] + h, at[1]]).unwrap();
                    let b = t.point(at).unwrap();
                    let c = t.point([at[0] - h, at[1]]).unwrap();
                    [0, 1, 2].map(|k| (a[k] - 2.0 * b[k] + c[k]) / (h * h))
                }
                _ => {
                    let a = t.point([at[0], at[1] + h]).unwrap();
                    let b = t.point(at).unwrap();
                    let c = t.point([at[0], at[1] - h]).unwrap();
                    [0, 1, 2].map(|k| (a[k] - 2.0 * b[k] + c[k]) / (h * h))
                }
            };
            for k in 0..3 {
                let v = smp.partials[r1][r2][k];
                assert!(
                    (v - num[k]).abs() < 1e-5 * (1.0 + v.abs()),
                    "({r1},{r2})[{k}] {v} vs {}",
                    num[k]
                );
            }
        }
    }

    #[test]
    fn geometry_roundtrip() {
        let dir = std::env::temp_dir().join("igabem_geo_test.json");
        let t = torus(3.0, 1.0);
        t.save(&dir).unwrap();
        let t2 = NurbsSurface::load(&dir).unwrap();
        for &s in &[[-2.1, 0.4], [0.9, -0.8]] {
            let a = t.point(s).unwrap();
            let b = t2.point(s).unwrap();
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }
}
