//! Singularity extraction for the Laplace single-layer kernel on a
//! parameterized surface.
//!
//! The pulled-back kernel U(F(s), F(t)) is split as K_F(s, t) * rho(s, t)
//! where K_F collects the leading singular behavior in closed form and rho
//! is a smooth factor suitable for spline quasi-interpolation. K_F is built
//! from the Taylor expansion of the geometry at s:
//!
//!   K_F = (1/4pi) * sum_{l=1}^{n} P_{3l-3}(u, v) * P(u, v)^{-(2l-1)/2}
//!         [+ eta * (u^2 + v^2) when n > 1]
//!
//! with (u, v) = t - s, P the first fundamental form at s, and P_0 = 1.
//! Integrals of spline-times-K_F are evaluated semi-analytically: exact in
//! the direction of u, adaptively in v.

use crate::error::{Error, Result};
use crate::nurbs::NurbsSurface;
use crate::poly::{bernstein_to_monomial, binomial, Poly2};
use crate::quadrature::adaptive_1d_vec;
use crate::spline::{BezierExtraction, Spline2};
use nalgebra::DMatrix;

pub const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// The point-evaluation kernel U(x, y) = 1 / (4 pi |x - y|).
pub fn laplace_kernel(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    1.0 / (FOUR_PI * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
}

/// Positive definite quadratic form P(u, v) = E u^2 + 2 F u v + G v^2.
#[derive(Debug, Clone, Copy)]
pub struct QuadForm {
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

impl QuadForm {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.e * u * u + 2.0 * self.f * u * v + self.g * v * v
    }

    pub fn is_positive_definite(&self) -> bool {
        self.e > 0.0 && self.e * self.g - self.f * self.f > 0.0
    }

    fn as_poly(&self) -> Poly2 {
        let mut p = Poly2::zero(2, 2);
        p.c[2][0] = self.e;
        p.c[1][1] = 2.0 * self.f;
        p.c[0][2] = self.g;
        p
    }
}

/// Taylor-based expansion of the kernel singularity at one surface point.
#[derive(Debug, Clone)]
pub struct KernelExpansion {
    /// expansion center in parameter space
    pub s: [f64; 2],
    /// surface point F(s)
    pub x: [f64; 3],
    /// number of expansion terms n (1..=3)
    pub n_terms: usize,
    /// coefficient of the positivity correction
    pub eta: f64,
    /// first fundamental form at s
    pub quad: QuadForm,
    /// homogeneous cubic P_3 (zero unless n >= 2)
    pub p3: Poly2,
    /// homogeneous sextic P_6 (zero unless n >= 3)
    pub p6: Poly2,
}

fn dot_poly(a: &[Poly2; 3], b: &[Poly2; 3]) -> Poly2 {
    let mut acc = a[0].mul(&b[0]);
    acc = acc.add(&a[1].mul(&b[1]));
    acc.add(&a[2].mul(&b[2]))
}

/// Builds the expansion of the kernel at parameter `s` with `n_terms`
/// singular terms; requires a nondegenerate surface point.
pub fn build_expansion(
    surface: &NurbsSurface,
    s: [f64; 2],
    n_terms: usize,
    eta: f64,
) -> Result<KernelExpansion> {
    if !(1..=3).contains(&n_terms) {
        return Err(Error::Argument(format!(
            "kernel expansion supports 1 to 3 terms, got {n_terms}"
        )));
    }
    let smp = surface.eval(s, 3)?;
    let d = |r1: usize, r2: usize| smp.partials[r1][r2];
    let quad = {
        let (fu, fv) = (d(1, 0), d(0, 1));
        QuadForm {
            e: fu.iter().map(|x| x * x).sum(),
            f: fu.iter().zip(&fv).map(|(a, b)| a * b).sum(),
            g: fv.iter().map(|x| x * x).sum(),
        }
    };
    if !quad.is_positive_definite() {
        return Err(Error::Extraction(format!(
            "degenerate first fundamental form at ({}, {})",
            s[0], s[1]
        )));
    }
    // homogeneous Taylor terms of F(s + (u, v)) - F(s), per coordinate
    let mono = |pows: &[((usize, usize), f64)]| -> [Poly2; 3] {
        [0, 1, 2].map(|c| {
            let mut p = Poly2::zero(3, 3);
            for &((a, b), w) in pows {
                p.c[a][b] += w * d(a, b)[c];
            }
            p
        })
    };
    let h1 = mono(&[((1, 0), 1.0), ((0, 1), 1.0)]);
    let h2 = mono(&[((2, 0), 0.5), ((1, 1), 1.0), ((0, 2), 0.5)]);
    let h3 = mono(&[
        ((3, 0), 1.0 / 6.0),
        ((2, 1), 0.5),
        ((1, 2), 0.5),
        ((0, 3), 1.0 / 6.0),
    ]);
    let mut p3 = Poly2::zero(0, 0);
    let mut p6 = Poly2::zero(0, 0);
    if n_terms >= 2 {
        let d3 = dot_poly(&h1, &h2).scaled(2.0);
        p3 = d3.scaled(-0.5);
        if n_terms >= 3 {
            let d4 = dot_poly(&h1, &h3).scaled(2.0).add(&dot_poly(&h2, &h2));
            p6 = d3.mul(&d3).scaled(3.0 / 8.0).add(&quad.as_poly().mul(&d4).scaled(-0.5));
        }
    }
    Ok(KernelExpansion {
        s,
        x: smp.point(),
        n_terms,
        eta,
        quad,
        p3,
        p6,
    })
}

impl KernelExpansion {
    /// K_F at offset (u, v) = t - s from the expansion center.
    pub fn eval_kf(&self, u: f64, v: f64) -> f64 {
        let (kf0, r2) = self.eval_kf_parts(u, v);
        kf0 + self.eta * r2
    }

    /// K_F split into the eta-independent part and the factor multiplying
    /// eta, so several eta values can share one expansion evaluation.
    pub fn eval_kf_parts(&self, u: f64, v: f64) -> (f64, f64) {
        let p = self.quad.eval(u, v);
        let mut acc = 1.0 / p.sqrt();
        if self.n_terms >= 2 {
            acc += self.p3.eval(u, v) / (p * p.sqrt());
        }
        if self.n_terms >= 3 {
            acc += self.p6.eval(u, v) / (p * p * p.sqrt());
        }
        let r2 = if self.n_terms > 1 { u * u + v * v } else { 0.0 };
        (acc / FOUR_PI, r2)
    }

    /// The smooth factor rho(s, t) = U(F(s), F(t)) / K_F(s, t), with the
    /// limit value 1 at t = s. `t` is unwrapped relative to the center on
    /// periodic surfaces before taking the offset.
    pub fn eval_rho(&self, surface: &NurbsSurface, t: [f64; 2]) -> Result<f64> {
        let tw = surface.unwrap_towards(t, [[self.s[0], self.s[0]], [self.s[1], self.s[1]]]);
        let (u, v) = (tw[0] - self.s[0], tw[1] - self.s[1]);
        if u * u + v * v < 1e-28 {
            return Ok(1.0);
        }
        let kf = self.eval_kf(u, v);
        if kf <= 0.0 {
            return Err(Error::Extraction(format!(
                "nonpositive extracted kernel {kf} at offset ({u}, {v}); raise eta"
            )));
        }
        let y = surface.point(t)?;
        Ok(laplace_kernel(self.x, y) / kf)
    }
}

// ---------------------------------------------------------------------------
// semi-analytic integration of polynomials against K_F
// ---------------------------------------------------------------------------

/// Largest supported u-power of the moment recurrences.
const MK: usize = 16;

/// Definite integrals W_k = int_{w0}^{w1} w^k (E w^2 + M)^{-(2l-1)/2} dw for
/// k = 0..=k_max and all families l = 1..=max_ell at once, stable for all
/// magnitudes of M / (E w^2). The closed-form antiderivative recurrences
/// build on each other, so computing the families together costs little more
/// than the highest one alone. Written into `out[l-1][0..=k_max]`.
fn w_moments_multi(
    e: f64,
    m: f64,
    max_ell: usize,
    w0: f64,
    w1: f64,
    k_max: usize,
    out: &mut [[f64; MK]; 3],
) {
    debug_assert!(w1 >= w0 && m >= 0.0 && e > 0.0 && k_max < MK && max_ell <= 3);
    for fam in out.iter_mut().take(max_ell) {
        fam[..=k_max].iter_mut().for_each(|o| *o = 0.0);
    }
    let mut piece = [[0.0; MK]; 3];
    let mut add_piece = |a: f64, b: f64, negate_odd: bool, out: &mut [[f64; MK]; 3]| {
        if b <= a {
            return;
        }
        w_moments_positive_multi(e, m, max_ell, a, b, k_max, &mut piece);
        for (fam, pf) in out.iter_mut().zip(&piece).take(max_ell) {
            for (k, (o, p)) in fam.iter_mut().zip(pf).enumerate().take(k_max + 1) {
                let s = if negate_odd && k % 2 == 1 { -1.0 } else { 1.0 };
                *o += s * p;
            }
        }
    };
    if w0 >= 0.0 {
        add_piece(w0, w1, false, out);
    } else if w1 <= 0.0 {
        add_piece(-w1, -w0, true, out);
    } else {
        add_piece(0.0, -w0, true, out);
        add_piece(0.0, w1, false, out);
    }
}

/// As `w_moments_multi` but for 0 <= a < b: split at gamma, with closed
/// forms in the inner zone where M is comparable to E w^2 and a truncated
/// binomial series outside where M / (E w^2) <= 1/16.
fn w_moments_positive_multi(
    e: f64,
    m: f64,
    max_ell: usize,
    a: f64,
    b: f64,
    k_max: usize,
    out: &mut [[f64; MK]; 3],
) {
    let gamma = 4.0 * (m / e).sqrt();
    for fam in out.iter_mut().take(max_ell) {
        fam[..=k_max].iter_mut().for_each(|o| *o = 0.0);
    }
    if a < gamma {
        let hi = b.min(gamma);
        let mut piece = [[0.0; MK]; 3];
        w_moments_closed_multi(e, m, max_ell, a, hi, k_max, &mut piece);
        for (fam, pf) in out.iter_mut().zip(&piece).take(max_ell) {
            for (o, v) in fam.iter_mut().zip(pf).take(k_max + 1) {
                *o += v;
            }
        }
    }
    if b > gamma {
        let lo = a.max(gamma);
        let mut piece = [0.0; MK];
        for ell in 1..=max_ell {
            w_moments_series(e, m, ell, lo, b, k_max, &mut piece);
            for (o, v) in out[ell - 1].iter_mut().zip(&piece).take(k_max + 1) {
                *o += v;
            }
        }
    }
}

/// Closed-form moments on [a, b] with b <= 4 sqrt(M/E): the normalized
/// variable x = w sqrt(E/M) stays in [0, 4], where the J_{k,q}
/// antiderivatives of x^k (1 + x^2)^{-q} are well scaled.
fn w_moments_closed_multi(
    e: f64,
    m: f64,
    max_ell: usize,
    a: f64,
    b: f64,
    k_max: usize,
    out: &mut [[f64; MK]; 3],
) {
    let scale = (e / m).sqrt();
    let (xa, xb) = (a * scale, b * scale);
    let anti = |x: f64| -> [[f64; MK]; 3] {
        let t = 1.0 + x * x;
        let rt = t.sqrt();
        let mut j = [[0.0; MK]; 3];
        j[0][0] = x.asinh();
        if k_max >= 1 {
            j[0][1] = rt;
        }
        for k in 2..=k_max {
            j[0][k] = (x.powi(k as i32 - 1) * rt - (k as f64 - 1.0) * j[0][k - 2]) / k as f64;
        }
        if max_ell >= 2 {
            j[1][0] = x / rt;
            if k_max >= 1 {
                j[1][1] = -1.0 / rt;
            }
            for k in 2..=k_max {
                j[1][k] = j[0][k - 2] - j[1][k - 2];
            }
        }
        if max_ell >= 3 {
            j[2][0] = x * (3.0 + 2.0 * x * x) / (3.0 * t * rt);
            if k_max >= 1 {
                j[2][1] = -1.0 / (3.0 * t * rt);
            }
            for k in 2..=k_max {
                j[2][k] = j[1][k - 2] - j[2][k - 2];
            }
        }
        j
    };
    let ja = anti(xa);
    let jb = anti(xb);
    // w^k T^{-q} dw = M^{(k+1)/2 - q} E^{-(k+1)/2} x^k (1+x^2)^{-q} dx;
    // with 2q = 2 ell - 1 the k = 0 exponent of M is the integer 1 - ell
    let step = (m / e).sqrt();
    for fam in 0..max_ell {
        let ell = fam + 1;
        let mut pow = m.powi(1 - ell as i32) / e.sqrt();
        for (k, o) in out[fam].iter_mut().enumerate().take(k_max + 1) {
            *o = pow * (jb[fam][k] - ja[fam][k]);
            pow *= step;
        }
    }
}

/// Series moments on [a, b] with a >= 4 sqrt(M/E): binomial expansion of
/// (1 + M/(E w^2))^{-q}, convergent with ratio <= 1/16.
fn w_moments_series(
    e: f64,
    m: f64,
    ell: usize,
    a: f64,
    b: f64,
    k_max: usize,
    out: &mut [f64; MK],
) {
    let q = (2 * ell - 1) as f64 / 2.0;
    let eq = e.powf(-q);
    // binomial coefficients binom(-q, j)
    const N_TERMS: usize = 44;
    let n_terms = N_TERMS;
    let mut cj = [1.0; N_TERMS];
    for j in 1..n_terms {
        cj[j] = cj[j - 1] * -(q + j as f64 - 1.0) / j as f64;
    }
    for (k, o) in out.iter_mut().enumerate().take(k_max + 1) {
        *o = {
            let kq1 = k as i32 - (2 * ell - 1) as i32 + 1; // k - 2q + 1
            let mut sum = 0.0;
            // endpoint contributions are kept in the scaled form
            // c_j w^{k-2q+1} (M/(E w^2))^j / (alpha+1) to avoid overflow or
            // underflow of either factor alone
            for (w, sign) in [(b, 1.0), (a, -1.0)] {
                let ratio = m / (e * w * w);
                let base = w.powi(kq1);
                let mut rj = 1.0;
                for (j, &c) in cj.iter().enumerate() {
                    if j > 0 {
                        rj *= ratio;
                    }
                    let alpha1 = kq1 - 2 * j as i32;
                    if alpha1 == 0 {
                        continue; // log case handled once below
                    }
                    sum += sign * c * base * rj / alpha1 as f64;
                }
            }
            if kq1 >= 0 && kq1 % 2 == 0 {
                let j0 = (kq1 / 2) as usize;
                if j0 < n_terms {
                    // (M/E)^{j0} = a^{2 j0} (M/(E a^2))^{j0}
                    let pw = a.powi(kq1) * (m / (e * a * a)).powi(j0 as i32);
                    sum += cj[j0] * pw * (b / a).ln();
                }
            }
            eq * sum
        };
    }
}

/// Integral over `rect` (in offset coordinates (u, v) relative to the
/// expansion center) of poly(u, v) * K_F(u, v).
///
/// Exact in u via the moment recurrences; adaptive in v. Valid whether or
/// not the rectangle contains the origin, which makes the same path serve
/// singular and nearly singular integrals.
pub fn integrate_poly_against_kernel(
    exp: &KernelExpansion,
    rect: [[f64; 2]; 2],
    poly: &Poly2,
    rel_tol: f64,
) -> f64 {
    let items = vec![StripItem {
        ur: rect[0],
        terms: kernel_poly_terms(exp, &[(0, poly)]),
    }];
    integrate_strips(exp, rect[1], &items, rel_tol, 1)[0] + eta_correction(exp, rect, poly)
}

/// Per-term data of Q_l = poly * P_{3l-3} for one u-range, kept per output
/// grid so several integrals sharing the element reuse the strip moments.
/// Each entry is (l, max u-power, [(grid, v-polynomials)]): with the
/// substitution u = w - (F/E) v, the contribution of grid g to the strip
/// integrand is sum_i W_i(v) * p_{g,i}(v) where p_{g,i} collects the
/// binomially expanded monomial coefficients once per entry instead of per
/// quadrature point.
type StripTerms = Vec<(usize, usize, Vec<(usize, Vec<Vec<f64>>)>)>;

struct StripItem {
    ur: [f64; 2],
    terms: StripTerms,
}

fn kernel_poly_terms(exp: &KernelExpansion, polys: &[(usize, &Poly2)]) -> StripTerms {
    let c_shear = exp.quad.f / exp.quad.e;
    let mut terms: StripTerms = Vec::new();
    for ell in 1..=exp.n_terms.min(3) {
        let mut kmax = 0;
        let mut grids = Vec::with_capacity(polys.len());
        for &(g, poly) in polys {
            let q = match ell {
                1 => poly.clone(),
                2 => poly.mul(&exp.p3),
                _ => poly.mul(&exp.p6),
            };
            // u^a v^b = sum_i binom(a, i) (-c v)^(a-i) v^b w^i
            let mut vcoef: Vec<Vec<f64>> = Vec::new();
            for (aa, row) in q.c.iter().enumerate() {
                for (bb, &c) in row.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    kmax = kmax.max(aa);
                    for i in 0..=aa {
                        let j = aa - i + bb;
                        if vcoef.len() <= i {
                            vcoef.resize(i + 1, Vec::new());
                        }
                        if vcoef[i].len() <= j {
                            vcoef[i].resize(j + 1, 0.0);
                        }
                        vcoef[i][j] += c * binomial(aa, i) * (-c_shear).powi((aa - i) as i32);
                    }
                }
            }
            if !vcoef.is_empty() {
                grids.push((g, vcoef));
            }
        }
        if !grids.is_empty() {
            terms.push((ell, kmax, grids));
        }
    }
    terms
}

/// Merges strip terms for the same u-range: matching Taylor orders share the
/// moment computation, their grid lists are concatenated.
fn merge_strip_terms(dst: &mut StripTerms, src: StripTerms) {
    for (ell, kmax, grids) in src {
        match dst.iter_mut().find(|(e, _, _)| *e == ell) {
            Some((_, dk, dg)) => {
                *dk = (*dk).max(kmax);
                dg.extend(grids);
            }
            None => dst.push((ell, kmax, grids)),
        }
    }
}

/// Positivity correction: exact polynomial integral of poly * eta r^2 over
/// the offset rectangle.
fn eta_correction(exp: &KernelExpansion, rect: [[f64; 2]; 2], poly: &Poly2) -> f64 {
    eta_correction_with(exp.n_terms, exp.eta, rect, poly)
}

fn eta_correction_with(n_terms: usize, eta: f64, rect: [[f64; 2]; 2], poly: &Poly2) -> f64 {
    if n_terms <= 1 || eta == 0.0 {
        return 0.0;
    }
    let [ur, vr] = rect;
    let mut r2 = Poly2::zero(2, 2);
    r2.c[2][0] = 1.0;
    r2.c[0][2] = 1.0;
    let q = poly.mul(&r2).scaled(eta);
    let mut acc = 0.0;
    for (aa, row) in q.c.iter().enumerate() {
        for (bb, &c) in row.iter().enumerate() {
            if c != 0.0 {
                let iu =
                    (ur[1].powi(aa as i32 + 1) - ur[0].powi(aa as i32 + 1)) / (aa as f64 + 1.0);
                let iv =
                    (vr[1].powi(bb as i32 + 1) - vr[0].powi(bb as i32 + 1)) / (bb as f64 + 1.0);
                acc += c * iu * iv;
            }
        }
    }
    acc
}

/// Sum of the singular-part integrals of several u-strips sharing the v
/// interval `vr`; the adaptive outer integration runs once for the whole
/// strip, which matters when the interval touches v = 0 where the
/// integrand has a logarithmic endpoint singularity.
fn integrate_strips(
    exp: &KernelExpansion,
    vr: [f64; 2],
    items: &[StripItem],
    rel_tol: f64,
    n_grids: usize,
) -> Vec<f64> {
    let qf = exp.quad;
    let c_shear = qf.f / qf.e;
    let mu = qf.g - qf.f * qf.f / qf.e;
    let integrand = |v: f64, out: &mut [f64]| {
        let m = mu * v * v;
        let mut wm = [[0.0; MK]; 3];
        out.fill(0.0);
        for StripItem { ur, terms } in items {
            let (w0, w1) = (ur[0] + c_shear * v, ur[1] + c_shear * v);
            let max_ell = terms.iter().map(|t| t.0).max().unwrap_or(0);
            let k_req = terms.iter().map(|t| t.1).max().unwrap_or(0);
            w_moments_multi(qf.e, m, max_ell, w0, w1, k_req, &mut wm);
            for (ell, _, grids) in terms {
                let w = &wm[*ell - 1];
                for (g, vcoefs) in grids {
                    let mut acc = 0.0;
                    for (cs, &wk) in vcoefs.iter().zip(w.iter()) {
                        let mut p = 0.0;
                        for &cj in cs.iter().rev() {
                            p = p * v + cj;
                        }
                        acc += wk * p;
                    }
                    out[*g] += acc;
                }
            }
        }
        for o in out.iter_mut() {
            *o /= FOUR_PI;
        }
    };
    // graded-rule depth and order tied to the requested tolerance: the
    // truncated tail is O(sigma^k log sigma^k) and each panel resolves the
    // shifted logarithm geometrically
    let n_panel = if rel_tol < 1e-10 { 16 } else { 12 };
    let k_panels = ((rel_tol.log10() / 0.25f64.log10()).ceil() as usize + 4).clamp(10, 24);
    // panel k contributes O(sigma^k k) of the total, so its Gauss order can
    // shrink with depth at fixed overall accuracy
    let big_l = -(0.1 * rel_tol).ln();
    let graded_order = |k: usize| -> usize {
        (((big_l - 1.386 * k as f64) / 2.5).ceil().max(2.0) as usize + 2).min(n_panel)
    };
    let panel = |n_pts: usize, a: f64, b: f64, acc: &mut [f64]| {
        let (x, w) = crate::quadrature::gauss_legendre(n_pts);
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut buf = vec![0.0; n_grids];
        for (xi, wi) in x.iter().zip(w) {
            integrand(c + h * xi, &mut buf);
            for (t, &b) in acc.iter_mut().zip(buf.iter()) {
                *t += wi * b * h;
            }
        }
    };
    let mut total = vec![0.0; n_grids];
    let mut spans: Vec<(f64, f64)> = Vec::new();
    if vr[0] < 0.0 && vr[1] > 0.0 {
        spans.push((vr[0], 0.0));
        spans.push((0.0, vr[1]));
    } else {
        spans.push((vr[0], vr[1]));
    }
    for (a, b) in spans {
        if b <= a {
            continue;
        }
        let width = b - a;
        let zero_left = a.abs() <= 1e-12 * width;
        let zero_right = b.abs() <= 1e-12 * width;
        if zero_left || zero_right {
            // the integrand has a logarithmic singularity at v = 0:
            // geometrically graded composite Gauss toward that endpoint
            let sigma = 0.25;
            let mut hi = 1.0;
            for k in 0..k_panels {
                let lo = hi * sigma;
                let n_pts = graded_order(k);
                if zero_left {
                    panel(n_pts, a + width * lo, a + width * hi, &mut total);
                } else {
                    panel(n_pts, b - width * hi, b - width * lo, &mut total);
                }
                hi = lo;
            }
        } else {
            let part = adaptive_1d_vec(&integrand, a, b, n_grids, rel_tol);
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
    }
    total
}

/// Integral of a bivariate spline (in parameter coordinates) against
/// K_F(s, .), element by element.
///
/// Elements near the expansion center go through the semi-analytic moment
/// machinery; on distant elements the monomial re-centering would be
/// ill-conditioned and K_F is smooth, so they are integrated adaptively on
/// the stable Bernstein form instead.
pub fn integrate_spline_against_kernel(
    exp: &KernelExpansion,
    sp: &Spline2,
    rel_tol: f64,
) -> f64 {
    let ext = BezierExtraction::new(&sp.kv1, &sp.kv2);
    let full = ext.apply(&sp.coeffs);
    integrate_bezier_against_kernel(exp, &ext, &full, rel_tol)
}

/// As `integrate_spline_against_kernel` but on a precomputed extraction and
/// its Bernstein ordinate grid, so the knot-insertion work is shared across
/// many integrals on the same knots.
pub fn integrate_bezier_against_kernel(
    exp: &KernelExpansion,
    ext: &BezierExtraction,
    full: &DMatrix<f64>,
    rel_tol: f64,
) -> f64 {
    integrate_bezier_against_kernel_multi(exp, ext, &[full], rel_tol)[0]
}

/// As `integrate_bezier_against_kernel` for several coefficient grids on the
/// same knots at once; the strip moments, far-element Gauss points and kernel
/// values are shared, so integrating a second grid is much cheaper than a
/// second call.
pub fn integrate_bezier_against_kernel_multi(
    exp: &KernelExpansion,
    ext: &BezierExtraction,
    fulls: &[&DMatrix<f64>],
    rel_tol: f64,
) -> Vec<f64> {
    let entry = BatchEntry {
        su: exp.s,
        eta: exp.eta,
        ext,
        fulls: fulls.iter().map(|f| (*f).clone()).collect(),
    };
    integrate_extracted_batch(exp, std::slice::from_ref(&entry), rel_tol)
        .pop()
        .unwrap()
}

/// One extracted integral of a batch sharing a collocation point: the
/// column-local unwrap of the collocation parameter, the positivity eta the
/// samples were extracted with, and one or more coefficient grids on the
/// entry's product knots.
pub struct BatchEntry<'a> {
    pub su: [f64; 2],
    pub eta: f64,
    pub ext: &'a BezierExtraction,
    pub fulls: Vec<DMatrix<f64>>,
}

/// All Bernstein ordinate weights of degree d at x in [0, 1].
fn bernstein_row(x: f64, d: usize, buf: &mut [f64]) {
    let y = 1.0 - x;
    let mut p = 1.0;
    for (k, b) in buf.iter_mut().enumerate().take(d + 1) {
        *b = binomial(d, k) * p;
        p *= x;
    }
    let mut p = 1.0;
    for b in buf.iter_mut().take(d + 1).rev() {
        *b *= p;
        p *= y;
    }
}

/// Integrates a whole batch of extracted entries against K_F of the same
/// collocation point. Working in offset coordinates (t - su) makes elements
/// shared by overlapping supports literally identical, so their strip
/// moments, outer quadrature and far kernel values are computed once for all
/// entries covering them; with heavily overlapping supports this is roughly
/// a (p+1)^2-fold reduction. Entries keep their individual eta (it enters
/// only through exactly integrable polynomial corrections).
pub fn integrate_extracted_batch(
    exp: &KernelExpansion,
    entries: &[BatchEntry],
    rel_tol: f64,
) -> Vec<Vec<f64>> {
    use std::collections::hash_map::Entry;
    use std::collections::HashMap;
    if entries.is_empty() {
        return Vec::new();
    }
    let (d1, d2) = (entries[0].ext.d1, entries[0].ext.d2);
    let mut base = Vec::with_capacity(entries.len());
    let mut total_grids = 0;
    for en in entries {
        debug_assert!(en.ext.d1 == d1 && en.ext.d2 == d2);
        base.push(total_grids);
        total_grids += en.fulls.len();
    }
    let mut totals = vec![0.0; total_grids];

    // near elements grouped by offset v-range, then by offset u-range
    struct StripAcc {
        vr: [f64; 2],
        items: Vec<StripItem>,
        item_index: HashMap<[u64; 2], usize>,
        gids: Vec<usize>,
        gidx: HashMap<usize, usize>,
    }
    let key = |r: [f64; 2]| [r[0].to_bits(), r[1].to_bits()];
    let mut strip_index: HashMap<[u64; 2], usize> = HashMap::new();
    let mut strip_accs: Vec<StripAcc> = Vec::new();

    // far elements grouped by offset rectangle; a block is
    // (grid id, eta, entry, local grid, ordinate row, ordinate column)
    struct FarAcc {
        rect: [[f64; 2]; 2],
        blocks: Vec<(usize, f64, usize, usize, usize, usize)>,
    }
    let mut far_index: HashMap<[u64; 4], usize> = HashMap::new();
    let mut far_accs: Vec<FarAcc> = Vec::new();

    for (ei, en) in entries.iter().enumerate() {
        let ext = en.ext;
        for (e1, w1) in ext.breaks1.windows(2).enumerate() {
            for (e2, w2) in ext.breaks2.windows(2).enumerate() {
                let rect = [[w1[0], w1[1]], [w2[0], w2[1]]];
                let offset_rect = [
                    [rect[0][0] - en.su[0], rect[0][1] - en.su[0]],
                    [rect[1][0] - en.su[1], rect[1][1] - en.su[1]],
                ];
                // per-axis distance from the singularity in element widths
                let axis_ratio = |r: [f64; 2]| -> f64 {
                    let w = r[1] - r[0];
                    ((r[0].max(0.0) - r[1].min(0.0)).max(0.0)) / w
                };
                let near =
                    axis_ratio(offset_rect[0]) <= 1.0 && axis_ratio(offset_rect[1]) <= 1.0;
                if near {
                    let mut polys = vec![Poly2::zero(d1, d2); en.fulls.len()];
                    for k in 0..=d1 {
                        let pu = bernstein_to_monomial(d1, k, rect[0][0], rect[0][1], en.su[0]);
                        for l in 0..=d2 {
                            let pv =
                                bernstein_to_monomial(d2, l, rect[1][0], rect[1][1], en.su[1]);
                            let sep = Poly2::from_separable(&pu, &pv);
                            for (g, poly) in polys.iter_mut().enumerate() {
                                let c =
                                    en.fulls[g][(ext.starts1[e1] + k, ext.starts2[e2] + l)];
                                *poly = poly.add(&sep.scaled(c));
                            }
                        }
                    }
                    let si = match strip_index.entry(key(offset_rect[1])) {
                        Entry::Occupied(o) => *o.get(),
                        Entry::Vacant(v) => {
                            strip_accs.push(StripAcc {
                                vr: offset_rect[1],
                                items: Vec::new(),
                                item_index: HashMap::new(),
                                gids: Vec::new(),
                                gidx: HashMap::new(),
                            });
                            *v.insert(strip_accs.len() - 1)
                        }
                    };
                    let sa = &mut strip_accs[si];
                    let mut local_polys = Vec::with_capacity(polys.len());
                    for (g, poly) in polys.iter().enumerate() {
                        let gid = base[ei] + g;
                        totals[gid] +=
                            eta_correction_with(exp.n_terms, en.eta, offset_rect, poly);
                        let lg = match sa.gidx.entry(gid) {
                            Entry::Occupied(o) => *o.get(),
                            Entry::Vacant(v) => {
                                sa.gids.push(gid);
                                *v.insert(sa.gids.len() - 1)
                            }
                        };
                        local_polys.push((lg, poly));
                    }
                    let terms = kernel_poly_terms(exp, &local_polys);
                    match sa.item_index.entry(key(offset_rect[0])) {
                        Entry::Occupied(o) => {
                            merge_strip_terms(&mut sa.items[*o.get()].terms, terms)
                        }
                        Entry::Vacant(v) => {
                            sa.items.push(StripItem {
                                ur: offset_rect[0],
                                terms,
                            });
                            v.insert(sa.items.len() - 1);
                        }
                    }
                } else {
                    let ku = key(offset_rect[0]);
                    let kv = key(offset_rect[1]);
                    let fi = match far_index.entry([ku[0], ku[1], kv[0], kv[1]]) {
                        Entry::Occupied(o) => *o.get(),
                        Entry::Vacant(v) => {
                            far_accs.push(FarAcc {
                                rect: offset_rect,
                                blocks: Vec::new(),
                            });
                            *v.insert(far_accs.len() - 1)
                        }
                    };
                    for g in 0..en.fulls.len() {
                        far_accs[fi].blocks.push((
                            base[ei] + g,
                            en.eta,
                            ei,
                            g,
                            ext.starts1[e1],
                            ext.starts2[e2],
                        ));
                    }
                }
            }
        }
    }

    // far elements are smooth: fixed tensor Gauss with the order tied to
    // the distance from the singularity (Bernstein ellipse estimate); the
    // requested digits carry a safety margin
    let digits = (-rel_tol.log10()).clamp(6.0, 14.0) + 2.0;
    let mut b1_buf = vec![0.0; d1 + 1];
    let mut b2_rows: Vec<f64> = Vec::new();
    let mut rowbuf: Vec<f64> = Vec::new();
    for fa in &far_accs {
        let r = fa.rect;
        let du = (r[0][0].max(0.0) - r[0][1].min(0.0)).max(0.0);
        let dv = (r[1][0].max(0.0) - r[1][1].min(0.0)).max(0.0);
        let dist = (du * du + dv * dv).sqrt();
        let order = |w: f64| -> usize {
            let rr = 1.0 + 2.0 * dist / w;
            let rho = rr + (rr * rr - 1.0).sqrt();
            ((digits * std::f64::consts::LN_10 / (2.0 * rho.ln())).ceil() as usize + 3)
                .clamp(5, 30)
        };
        let n1 = order(r[0][1] - r[0][0]);
        let n2 = order(r[1][1] - r[1][0]);
        let (gx1, gw1) = crate::quadrature::gauss_legendre(n1);
        let (gx2, gw2) = crate::quadrature::gauss_legendre(n2);
        let (c1, h1) = (0.5 * (r[0][0] + r[0][1]), 0.5 * (r[0][1] - r[0][0]));
        let (c2, h2) = (0.5 * (r[1][0] + r[1][1]), 0.5 * (r[1][1] - r[1][0]));
        b2_rows.resize(n2 * (d2 + 1), 0.0);
        for (j, xj) in gx2.iter().enumerate() {
            bernstein_row(0.5 * (xj + 1.0), d2, &mut b2_rows[j * (d2 + 1)..(j + 1) * (d2 + 1)]);
        }
        let nb = fa.blocks.len();
        let mut acc = vec![0.0; nb];
        rowbuf.resize(nb * (d2 + 1), 0.0);
        for (xi, wi) in gx1.iter().zip(gw1) {
            let u = c1 + h1 * xi;
            bernstein_row(0.5 * (xi + 1.0), d1, &mut b1_buf);
            for (bi, &(_, _, ei, g, s1, s2)) in fa.blocks.iter().enumerate() {
                let full = &entries[ei].fulls[g];
                for l in 0..=d2 {
                    let mut sum = 0.0;
                    for (k, &bk) in b1_buf.iter().enumerate() {
                        sum += bk * full[(s1 + k, s2 + l)];
                    }
                    rowbuf[bi * (d2 + 1) + l] = sum;
                }
            }
            for (j, (xj, wj)) in gx2.iter().zip(gw2).enumerate() {
                let v = c2 + h2 * xj;
                let (kf0, r2) = exp.eval_kf_parts(u, v);
                let brow = &b2_rows[j * (d2 + 1)..(j + 1) * (d2 + 1)];
                let wq = wi * wj;
                for (bi, &(_, eta, ..)) in fa.blocks.iter().enumerate() {
                    let rrow = &rowbuf[bi * (d2 + 1)..(bi + 1) * (d2 + 1)];
                    let mut val = 0.0;
                    for (rl, bl) in rrow.iter().zip(brow) {
                        val += rl * bl;
                    }
                    acc[bi] += wq * (kf0 + eta * r2) * val;
                }
            }
        }
        for (&(gid, ..), a) in fa.blocks.iter().zip(&acc) {
            totals[gid] += a * h1 * h2;
        }
    }

    for sa in &strip_accs {
        let part = integrate_strips(exp, sa.vr, &sa.items, rel_tol, sa.gids.len());
        for (gid, p) in sa.gids.iter().zip(part) {
            totals[*gid] += p;
        }
    }

    let mut out = Vec::with_capacity(entries.len());
    for (ei, en) in entries.iter().enumerate() {
        out.push(totals[base[ei]..base[ei] + en.fulls.len()].to_vec());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nurbs::{flat_patch, screen, torus};
    use crate::quadrature::{adaptive_2d, duffy_singular_2d, gauss_2d};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn screen_first_fundamental_form_at_origin() {
        let s = screen();
        let exp = build_expansion(&s, [0.0, 0.0], 3, 1.0).unwrap();
        assert!((exp.quad.e - 1.0).abs() < 1e-14);
        assert!((exp.quad.g - 1.0).abs() < 1e-14);
        assert!(exp.quad.f.abs() < 1e-14);
    }

    #[test]
    fn quad_form_matches_squared_distance_to_third_order() {
        let srf = torus(3.0, 1.0);
        let s = [0.4, -0.3];
        let exp = build_expansion(&srf, s, 3, 1.0).unwrap();
        let x = srf.point(s).unwrap();
        for &(du, dv) in &[(1.0, 0.3), (-0.5, 1.0), (0.7, -0.7)] {
            let mut prev = 0.0;
            for &eps in &[1e-2, 5e-3, 2.5e-3] {
                let y = srf.point([s[0] + eps * du, s[1] + eps * dv]).unwrap();
                let d2: f64 = (0..3).map(|k| (x[k] - y[k]) * (x[k] - y[k])).sum();
                let p = exp.quad.eval(eps * du, eps * dv);
                let rel = (d2 - p).abs() / d2;
                // relative error O(r): halving eps roughly halves it
                if prev > 0.0 {
                    assert!(rel < 0.7 * prev, "rel={rel} prev={prev}");
                }
                prev = rel;
            }
        }
    }

    #[test]
    fn flat_patch_rho_is_one() {
        let srf = flat_patch([[0.0, 1.0], [0.0, 1.0]]);
        let exp = build_expansion(&srf, [0.3, 0.4], 1, 0.0).unwrap();
        for &(t1, t2) in &[(0.31, 0.4), (0.9, 0.05), (0.0, 1.0), (0.3, 0.4)] {
            let rho = exp.eval_rho(&srf, [t1, t2]).unwrap();
            assert!((rho - 1.0).abs() < 1e-12, "rho={rho}");
        }
    }

    #[test]
    fn expansion_terms_are_homogeneous() {
        let srf = torus(3.0, 1.0);
        let exp = build_expansion(&srf, [1.2, 0.1], 3, 1.0).unwrap();
        let (u, v) = (0.173, -0.411);
        let lam = 0.37;
        let p3 = exp.p3.eval(u, v);
        let p3l = exp.p3.eval(lam * u, lam * v);
        assert!((p3l - lam.powi(3) * p3).abs() < 1e-12 * p3.abs().max(1.0));
        let p6 = exp.p6.eval(u, v);
        let p6l = exp.p6.eval(lam * u, lam * v);
        assert!((p6l - lam.powi(6) * p6).abs() < 1e-12 * p6.abs().max(1.0));
    }

    #[test]
    fn rho_consistency_order_increases_with_terms() {
        let srf = torus(3.0, 1.0);
        let s = [0.35, -0.2];
        let dir = [0.8, 0.6];
        for n in 1..=3usize {
            let exp = build_expansion(&srf, s, n, 0.0).unwrap();
            let mut errs = Vec::new();
            for &eps in &[4e-3, 2e-3, 1e-3] {
                let t = [s[0] + eps * dir[0], s[1] + eps * dir[1]];
                let rho = exp.eval_rho(&srf, t).unwrap();
                errs.push((rho - 1.0).abs());
            }
            for w in errs.windows(2) {
                let eoc = (w[0] / w[1]).log2();
                assert!(
                    (n as f64 - 0.3..=n as f64 + 0.3).contains(&eoc),
                    "n={n} eoc={eoc}"
                );
            }
        }
    }

    #[test]
    fn unit_square_corner_singularity_closed_form() {
        // int_{[0,1]^2} 1/|t| dt = 2 ln(1 + sqrt(2))
        let srf = flat_patch([[0.0, 1.0], [0.0, 1.0]]);
        let exp = build_expansion(&srf, [0.0, 0.0], 1, 0.0).unwrap();
        let one = Poly2::constant(1.0);
        let got = integrate_poly_against_kernel(&exp, [[0.0, 1.0], [0.0, 1.0]], &one, 1e-13);
        let expect = 2.0 * (1.0 + 2.0f64.sqrt()).ln() / FOUR_PI;
        assert!((got - expect).abs() < 1e-11, "got {got} expect {expect}");
    }

    #[test]
    fn odd_monomials_vanish_on_symmetric_rectangles() {
        let srf = flat_patch([[-1.0, 1.0], [-1.0, 1.0]]);
        let exp = build_expansion(&srf, [0.0, 0.0], 1, 0.0).unwrap();
        let mut p = Poly2::zero(1, 2);
        p.c[1][2] = 1.0; // u v^2, odd in u
        let got = integrate_poly_against_kernel(&exp, [[-0.8, 0.8], [-0.5, 0.5]], &p, 1e-12);
        assert!(got.abs() < 1e-13, "got {got}");
    }

    #[test]
    fn singular_integral_matches_duffy_oracle() {
        let srf = screen();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..4 {
            let s = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let exp = build_expansion(&srf, s, 3, 1.0).unwrap();
            let mut poly = Poly2::zero(2, 2);
            for a in 0..=2 {
                for b in 0..=2 {
                    poly.c[a][b] = rng.gen_range(-1.0..1.0);
                }
            }
            let rect = [[-0.3, 0.45], [-0.25, 0.4]];
            let got = integrate_poly_against_kernel(&exp, rect, &poly, 1e-12);
            let oracle = duffy_singular_2d(
                &|u, v| poly.eval(u, v) * exp.eval_kf(u, v),
                rect,
                [0.0, 0.0],
                48,
            );
            let rel = (got - oracle).abs() / oracle.abs().max(1e-12);
            assert!(rel < 1e-8, "trial {trial}: got {got} oracle {oracle} rel {rel}");
        }
    }

    #[test]
    fn nearly_singular_integral_matches_adaptive_oracle() {
        let srf = torus(3.0, 1.0);
        let s = [0.5, 0.25];
        let exp = build_expansion(&srf, s, 2, 1.0).unwrap();
        let mut poly = Poly2::zero(2, 1);
        poly.c[0][0] = 0.7;
        poly.c[2][1] = -1.3;
        poly.c[1][0] = 0.4;
        // rectangle close to, but not containing, the origin
        let rect = [[0.01, 0.4], [-0.3, -0.005]];
        let got = integrate_poly_against_kernel(&exp, rect, &poly, 1e-12);
        let oracle = adaptive_2d(
            &|u, v| poly.eval(u, v) * exp.eval_kf(u, v),
            rect,
            1e-12,
        );
        let rel = (got - oracle).abs() / oracle.abs().max(1e-14);
        assert!(rel < 1e-9, "got {got} oracle {oracle} rel {rel}");
    }

    #[test]
    fn regular_integral_matches_gauss() {
        let srf = torus(3.0, 1.0);
        let exp = build_expansion(&srf, [0.0, 0.0], 3, 1.0).unwrap();
        let mut poly = Poly2::zero(3, 2);
        poly.c[0][0] = 1.0;
        poly.c[3][2] = 0.5;
        poly.c[1][1] = -2.0;
        let rect = [[0.8, 1.3], [0.4, 0.9]];
        let got = integrate_poly_against_kernel(&exp, rect, &poly, 1e-12);
        let oracle = gauss_2d(|u, v| poly.eval(u, v) * exp.eval_kf(u, v), rect, 40);
        assert!((got - oracle).abs() < 1e-9 * oracle.abs().max(1.0));
    }

    #[test]
    fn spline_integration_agrees_with_duffy() {
        use crate::spline::KnotVector;
        use nalgebra::DMatrix;
        let srf = screen();
        let s = [0.1, -0.05];
        let exp = build_expansion(&srf, s, 2, 1.0).unwrap();
        let kv1 = KnotVector::new(vec![-0.4, -0.4, -0.4, 0.1, 0.6, 0.6, 0.6], 2).unwrap();
        let kv2 = KnotVector::new(vec![-0.55, -0.55, -0.55, -0.05, 0.45, 0.45, 0.45], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let c = DMatrix::from_fn(kv1.dim(), kv2.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let sp = Spline2::new(kv1, kv2, c);
        let got = integrate_spline_against_kernel(&exp, &sp, 1e-12);
        let mut oracle = 0.0;
        for (rect, _) in sp.bezier_elements() {
            let f = |t1: f64, t2: f64| {
                let te1 = t1.clamp(rect[0][0], rect[0][1] - 1e-13);
                let te2 = t2.clamp(rect[1][0], rect[1][1] - 1e-13);
                sp.eval(te1, te2) * exp.eval_kf(t1 - s[0], t2 - s[1])
            };
            let inside = s[0] >= rect[0][0]
                && s[0] <= rect[0][1]
                && s[1] >= rect[1][0]
                && s[1] <= rect[1][1];
            oracle += if inside {
                duffy_singular_2d(&f, rect, s, 40)
            } else {
                adaptive_2d(&f, rect, 1e-12)
            };
        }
        let rel = (got - oracle).abs() / oracle.abs().max(1e-12);
        assert!(rel < 1e-7, "got {got} oracle {oracle} rel {rel}");
    }
}
