//! Self-contained oracle suites behind the `check` subcommand: each suite
//! recomputes a handful of quantities with an independent method and reports
//! the largest deviation.

use crate::error::Result;
use crate::kernel::{build_expansion, integrate_poly_against_kernel, FOUR_PI};
use crate::nurbs::{flat_patch, screen, torus};
use crate::poly::Poly2;
use crate::product::multiply_1d;
use crate::qi::QiOperator;
use crate::quadrature::duffy_singular_2d;
use crate::spline::KnotVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// One line of a check report.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub max_dev: f64,
    pub tol: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_dev.is_finite() && self.max_dev <= self.tol
    }
}

/// Modified-moment engine vs closed form and a Duffy oracle.
pub fn check_moments(seed: u64) -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    let srf = flat_patch([[0.0, 1.0], [0.0, 1.0]]);

    // integral of 1/(4 pi r) over the unit square from a corner
    let exp = build_expansion(&srf, [0.0, 0.0], 1, 0.0)?;
    let one = {
        let mut p = Poly2::zero(0, 0);
        p.c[0][0] = 1.0;
        p
    };
    let got = integrate_poly_against_kernel(&exp, [[0.0, 1.0], [0.0, 1.0]], &one, 1e-12);
    let expect = 2.0 * (1.0 + 2.0f64.sqrt()).ln() / FOUR_PI;
    out.push(CheckLine {
        name: "unit square corner closed form".into(),
        max_dev: (got - expect).abs(),
        tol: 1e-8,
    });

    // random interior centers and random quadratics vs a Duffy oracle
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    for _ in 0..5 {
        let s = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
        let exp = build_expansion(&srf, s, 1, 0.0)?;
        let mut poly = Poly2::zero(2, 2);
        for a in 0..=2 {
            for b in 0..=2 {
                poly.c[a][b] = rng.gen_range(-1.0..1.0);
            }
        }
        let rect = [[-s[0], 1.0 - s[0]], [-s[1], 1.0 - s[1]]];
        let got = integrate_poly_against_kernel(&exp, rect, &poly, 1e-12);
        let oracle = duffy_singular_2d(
            &|t1, t2| {
                let (u, v) = (t1 - s[0], t2 - s[1]);
                poly.eval(u, v) / (FOUR_PI * (u * u + v * v).sqrt())
            },
            [[0.0, 1.0], [0.0, 1.0]],
            s,
            48,
        );
        max_dev = max_dev.max((got - oracle).abs());
    }
    out.push(CheckLine {
        name: "random quadratic vs Duffy oracle".into(),
        max_dev,
        tol: 1e-8,
    });
    Ok(out)
}

/// Quasi-interpolation polynomial reproduction up to the operator degree.
pub fn check_qi(seed: u64) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    for p in 1..=4usize {
        let q = QiOperator::uniform(-1.0, 2.0, 4 * p + 3, p)?;
        for deg in 0..=p {
            let coeffs: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let s = q.apply(f);
            for k in 0..=40 {
                let x = -1.0 + 3.0 * k as f64 / 40.0;
                max_dev = max_dev.max((s.eval(x) - f(x)).abs());
            }
        }
    }
    Ok(vec![CheckLine {
        name: "polynomial reproduction".into(),
        max_dev,
        tol: 1e-13,
    }])
}

/// Exact spline products vs pointwise multiplication.
pub fn check_product(seed: u64) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kv1 = KnotVector::uniform(0.0, 1.0, 5, 3);
    let kv2 = KnotVector::uniform(0.0, 1.0, 4, 2);
    let mut max_dev = 0.0f64;
    for _ in 0..5 {
        let a = crate::spline::Spline1 {
            kv: kv1.clone(),
            coeffs: (0..kv1.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let b = crate::spline::Spline1 {
            kv: kv2.clone(),
            coeffs: (0..kv2.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let ab = multiply_1d(&a, &b)?;
        for k in 0..=60 {
            let x = k as f64 / 60.0;
            max_dev = max_dev.max((ab.eval(x) - a.eval(x) * b.eval(x)).abs());
        }
    }
    Ok(vec![CheckLine {
        name: "pointwise product exactness".into(),
        max_dev,
        tol: 1e-12,
    }])
}

/// Shipped geometries vs their implicit equations.
pub fn check_geometry(seed: u64) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rr, r) = (3.0, 1.0);
    let srf = torus(rr, r);
    let dom = srf.domain();
    let mut max_dev = 0.0f64;
    for _ in 0..200 {
        let t = [
            rng.gen_range(dom[0][0]..dom[0][1]),
            rng.gen_range(dom[1][0]..dom[1][1]),
        ];
        let p = srf.point(t)?;
        let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - rr;
        max_dev = max_dev.max((ring * ring + p[2] * p[2] - r * r).abs());
    }
    let mut out = vec![CheckLine {
        name: "torus implicit equation".into(),
        max_dev,
        tol: 1e-12,
    }];

    let scr = screen();
    let mut max_dev = 0.0f64;
    for _ in 0..200 {
        let t = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let p = scr.point(t)?;
        max_dev = max_dev
            .max((p[0] - t[0]).abs())
            .max((p[1] - t[1]).abs())
            .max((p[2] - (t[0] * t[0] - t[1] * t[1])).abs());
    }
    out.push(CheckLine {
        name: "screen graph equation".into(),
        max_dev,
        tol: 1e-12,
    });
    Ok(out)
}

/// Runs the named suite ("all" runs everything); returns the report lines.
pub fn run_suite(suite: &str, seed: u64) -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    let all = suite == "all";
    if all || suite == "moments" {
        out.extend(check_moments(seed)?);
    }
    if all || suite == "qi" {
        out.extend(check_qi(seed)?);
    }
    if all || suite == "product" {
        out.extend(check_product(seed)?);
    }
    if all || suite == "geometry" {
        out.extend(check_geometry(seed)?);
    }
    if out.is_empty() {
        return Err(crate::error::Error::Argument(format!(
            "unknown check suite '{suite}' (moments, qi, product, geometry, all)"
        )));
    }
    Ok(out)
}
