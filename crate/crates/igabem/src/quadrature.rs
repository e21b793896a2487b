//! Gauss–Legendre rules plus the adaptive drivers used for the cubature
//! engine and for the independent oracle integrals in the test suites.

use std::sync::OnceLock;

/// Highest memoized Gauss order; hot loops stay well below this.
const MAX_RULE: usize = 64;

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence and memoized per order (lock-free after the
/// first call, which matters in the parallel assembly loops).
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    static RULES: [OnceLock<(Vec<f64>, Vec<f64>)>; MAX_RULE + 1] =
        [const { OnceLock::new() }; MAX_RULE + 1];
    assert!(n >= 1 && n <= MAX_RULE, "Gauss order {n} out of range");
    let (x, w) = RULES[n].get_or_init(|| compute_rule(n));
    (x, w)
}

fn compute_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Fixed-order Gauss on [a, b].
pub fn gauss_1d<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        acc += wi * f(c + h * xi);
    }
    acc * h
}

/// Tensor Gauss on a rectangle.
pub fn gauss_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    rect: [[f64; 2]; 2],
    n: usize,
) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (c1, h1) = (0.5 * (rect[0][0] + rect[0][1]), 0.5 * (rect[0][1] - rect[0][0]));
    let (c2, h2) = (0.5 * (rect[1][0] + rect[1][1]), 0.5 * (rect[1][1] - rect[1][0]));
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        for (xj, wj) in x.iter().zip(w) {
            acc += wi * wj * f(c1 + h1 * xi, c2 + h2 * xj);
        }
    }
    acc * h1 * h2
}

/// Adaptive bisection for a vector-valued integrand over [a, b].
///
/// Per-component convergence is judged against a running magnitude scale so
/// components of very different size are resolved independently.
pub fn adaptive_1d_vec<F>(f: &F, a: f64, b: f64, dim: usize, rel_tol: f64) -> Vec<f64>
where
    F: Fn(f64, &mut [f64]),
{
    let n = 20;
    let panel = |a: f64, b: f64, out: &mut [f64]| {
        let (x, w) = gauss_legendre(n);
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut buf = vec![0.0; out.len()];
        for (xi, wi) in x.iter().zip(w) {
            f(c + h * xi, &mut buf);
            for (o, &v) in out.iter_mut().zip(&buf) {
                *o += wi * v;
            }
        }
        for o in out.iter_mut() {
            *o *= h;
        }
    };

    struct Rec<'a, P: FnMut(f64, f64, &mut [f64])> {
        panel: P,
        rel_tol: f64,
        scale: &'a mut Vec<f64>,
    }
    fn go<P: FnMut(f64, f64, &mut [f64])>(
        r: &mut Rec<P>,
        a: f64,
        b: f64,
        coarse: &[f64],
        depth: usize,
        acc: &mut [f64],
    ) {
        let m = 0.5 * (a + b);
        let mut left = vec![0.0; coarse.len()];
        let mut right = vec![0.0; coarse.len()];
        (r.panel)(a, m, &mut left);
        (r.panel)(m, b, &mut right);
        for (s, (&l, &rr)) in r.scale.iter_mut().zip(left.iter().zip(right.iter())) {
            *s = s.max(l.abs() + rr.abs());
        }
        let mut ok = true;
        for i in 0..coarse.len() {
            let diff = (left[i] + right[i] - coarse[i]).abs();
            if diff > r.rel_tol * r.scale[i].max(1e-300) {
                ok = false;
                break;
            }
        }
        if ok || depth >= 52 {
            for i in 0..coarse.len() {
                acc[i] += left[i] + right[i];
            }
            return;
        }
        go(r, a, m, &left, depth + 1, acc);
        go(r, m, b, &right, depth + 1, acc);
    }

    let mut coarse = vec![0.0; dim];
    panel(a, b, &mut coarse);
    let mut scale: Vec<f64> = coarse.iter().map(|c| c.abs()).collect();
    let mut acc = vec![0.0; dim];
    let mut rec = Rec {
        panel,
        rel_tol,
        scale: &mut scale,
    };
    go(&mut rec, a, b, &coarse, 0, &mut acc);
    acc
}

/// Adaptive tensor quadrature over a rectangle for smooth scalar integrands.
/// Oracle-grade: slow but reliable.
pub fn adaptive_2d<F>(f: &F, rect: [[f64; 2]; 2], rel_tol: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    fn go<F: Fn(f64, f64) -> f64>(
        f: &F,
        rect: [[f64; 2]; 2],
        coarse: f64,
        rel_tol: f64,
        scale: f64,
        depth: usize,
    ) -> f64 {
        let m1 = 0.5 * (rect[0][0] + rect[0][1]);
        let m2 = 0.5 * (rect[1][0] + rect[1][1]);
        let quads = [
            [[rect[0][0], m1], [rect[1][0], m2]],
            [[m1, rect[0][1]], [rect[1][0], m2]],
            [[rect[0][0], m1], [m2, rect[1][1]]],
            [[m1, rect[0][1]], [m2, rect[1][1]]],
        ];
        let parts: Vec<f64> = quads.iter().map(|&q| gauss_2d(f, q, 10)).collect();
        let fine: f64 = parts.iter().sum();
        let scale = scale.max(fine.abs());
        if (fine - coarse).abs() <= rel_tol * scale.max(1e-300) || depth >= 30 {
            return fine;
        }
        quads
            .iter()
            .zip(&parts)
            .map(|(&q, &p)| go(f, q, p, rel_tol * 0.7, scale, depth + 1))
            .sum()
    }
    let coarse = gauss_2d(f, rect, 10);
    go(f, rect, coarse, rel_tol, coarse.abs(), 0)
}

/// Integral over `rect` of an integrand with a 1/r-type singularity at
/// `s` (inside or on the closure of the rectangle), via Duffy transforms.
///
/// The rectangle is split into up to four sub-rectangles sharing the corner
/// `s`; each is split into two triangles whose Duffy maps remove the
/// singularity, after which tensor Gauss converges quickly.
pub fn duffy_singular_2d<F>(f: &F, rect: [[f64; 2]; 2], s: [f64; 2], n: usize) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let mut total = 0.0;
    let xs = [rect[0][0], s[0].clamp(rect[0][0], rect[0][1]), rect[0][1]];
    let ys = [rect[1][0], s[1].clamp(rect[1][0], rect[1][1]), rect[1][1]];
    for i in 0..2 {
        for j in 0..2 {
            let (x0, x1) = (xs[i], xs[i + 1]);
            let (y0, y1) = (ys[j], ys[j + 1]);
            if (x1 - x0).abs() < 1e-300 || (y1 - y0).abs() < 1e-300 {
                continue;
            }
            // Corner of this sub-rectangle at the (clamped) singular point.
            let cx = if i == 0 { x1 } else { x0 };
            let cy = if j == 0 { y1 } else { y0 };
            let lx = if i == 0 { x0 - x1 } else { x1 - x0 };
            let ly = if j == 0 { y0 - y1 } else { y1 - y0 };
            // Two Duffy triangles on the unit square (u, v) in [0,1]^2:
            // (u, uv) and (uv, u); Jacobian u in both.
            let (gx, gw) = gauss_legendre(n);
            for (xi, wi) in gx.iter().zip(gw) {
                let u = 0.5 * (xi + 1.0);
                for (xj, wj) in gx.iter().zip(gw) {
                    let v = 0.5 * (xj + 1.0);
                    let w = 0.25 * wi * wj * u * (lx * ly).abs();
                    let (a1, b1) = (cx + lx * u, cy + ly * u * v);
                    let (a2, b2) = (cx + lx * u * v, cy + ly * u);
                    total += w * (f(a1, b1) + f(a2, b2));
                }
            }
        }
    }
    total
}
