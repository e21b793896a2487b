//! Collocation matrix assembly for the single-layer operator.
//!
//! Rows are collocation points, columns are tensor-product B-splines of the
//! density space. Entries whose basis support contains (or nearly touches)
//! the collocation pre-image are integrated by singularity extraction: the
//! smooth factor rho * J is quasi-interpolated from point samples, multiplied
//! exactly by the basis function, and the resulting spline is integrated
//! against K_F semi-analytically. Regular entries reduce to a fixed cubature
//! rule with precomputed separable weights per column.

use crate::error::{Error, Result};
use crate::kernel::{
    build_expansion, integrate_extracted_batch, BatchEntry,
    laplace_kernel, KernelExpansion,
};
use crate::nurbs::NurbsSurface;
use crate::product::product_matrix_1d;
use crate::qi::QiOperator;
use crate::spline::{local_bspline, BezierExtraction, KnotVector, TensorSplineSpace};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryClass {
    Singular,
    NearSingular,
    Regular,
}

#[derive(Debug, Clone)]
pub struct AssemblyConfig {
    /// kernel expansion terms n (1..=3)
    pub n_terms: usize,
    /// positivity correction coefficient
    pub eta: f64,
    /// QI spline degree for singular and nearly singular entries
    pub qi_degree_singular: usize,
    /// QI spline degree for regular entries; the smoother integrand affords
    /// a higher degree with fewer nodes
    pub qi_degree_regular: usize,
    /// nodes per direction for singular and nearly singular entries
    pub qi_nodes_singular: usize,
    /// nodes per direction for regular entries
    pub qi_nodes_regular: usize,
    /// near-singular threshold in multiples of the largest physical element
    /// diameter of the column support
    pub near_threshold: f64,
    /// relative tolerance of the outer adaptive integration
    pub rel_tol: f64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            n_terms: 2,
            eta: 1.0,
            qi_degree_singular: 2,
            qi_degree_regular: 4,
            qi_nodes_singular: 13,
            qi_nodes_regular: 7,
            near_threshold: 2.0,
            rel_tol: 1e-9,
        }
    }
}

/// Right-hand side specification.
pub enum RhsSpec<'a> {
    /// Dirichlet data evaluated at the collocation points.
    Pointwise(&'a (dyn Fn([f64; 3]) -> f64 + Sync)),
    /// A known density in parameter coordinates; the right-hand side becomes
    /// the single-layer potential of that density at the collocation points,
    /// computed with the same cubature as the matrix.
    KnownDensity(&'a (dyn Fn([f64; 2]) -> f64 + Sync)),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClassCounts {
    pub singular: usize,
    pub near_singular: usize,
    pub regular: usize,
}

#[derive(Debug)]
pub struct Assembly {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub counts: ClassCounts,
}

/// Tensor grid of collocation points from the two knot vectors, with the
/// flattened ordering i = i2 * n1 + i1. Knot vectors with full-multiplicity
/// interior knots generate abscissas segment by segment.
pub fn collocation_grid(
    kv1: &KnotVector,
    kv2: &KnotVector,
    improved: bool,
    beta: f64,
) -> Result<Vec<[f64; 2]>> {
    let x1 = kv1.greville_segmented(improved, beta)?;
    let x2 = kv2.greville_segmented(improved, beta)?;
    let mut out = Vec::with_capacity(x1.len() * x2.len());
    for &t2 in &x2 {
        for &t1 in &x1 {
            out.push([t1, t2]);
        }
    }
    Ok(out)
}

/// Classifies one (collocation point, column) pair and returns the
/// periodically unwrapped pre-image.
pub fn classify(
    surface: &NurbsSurface,
    x_row: [f64; 3],
    s: [f64; 2],
    rect: [[f64; 2]; 2],
    max_diam: f64,
    threshold: f64,
) -> Result<(EntryClass, [f64; 2])> {
    let su = surface.unwrap_towards(s, rect);
    let tol = 1e-12;
    let inside = su[0] >= rect[0][0] - tol
        && su[0] <= rect[0][1] + tol
        && su[1] >= rect[1][0] - tol
        && su[1] <= rect[1][1] + tol;
    if inside {
        return Ok((EntryClass::Singular, su));
    }
    let c = [
        su[0].clamp(rect[0][0], rect[0][1]),
        su[1].clamp(rect[1][0], rect[1][1]),
    ];
    let y = surface.point(c)?;
    let dist = ((x_row[0] - y[0]).powi(2) + (x_row[1] - y[1]).powi(2) + (x_row[2] - y[2]).powi(2))
        .sqrt();
    if dist <= threshold * max_diam {
        Ok((EntryClass::NearSingular, su))
    } else {
        Ok((EntryClass::Regular, su))
    }
}

/// Per-column precomputed data shared by all rows.
struct ColumnData {
    rect: [[f64; 2]; 2],
    max_diam: f64,
    // singular path
    s_nodes1: Vec<f64>,
    s_nodes2: Vec<f64>,
    /// Bernstein extraction of the product space, with the sample-to-ordinate
    /// maps a1, a2 folded in: ordinate grid = a1 * samples * a2^T
    ext: BezierExtraction,
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    s_f: Vec<[f64; 3]>,
    s_jac: Vec<f64>,
    // regular path
    reg: RegularColumn,
}

/// Separable cubature data of the regular rule for one trial function:
/// nodes, per-direction weights, and the sampled surface grid.
pub struct RegularColumn {
    pub nodes1: Vec<f64>,
    pub nodes2: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub f: Vec<[f64; 3]>,
    pub jac: Vec<f64>,
}

/// Builds the regular-rule data for column `j` with the given QI parameters.
pub fn build_regular_column(
    surface: &NurbsSurface,
    space: &TensorSplineSpace,
    j: usize,
    n_nodes: usize,
    degree: usize,
) -> Result<RegularColumn> {
    let (j1, j2) = space.unflat(j);
    let b1 = local_bspline(&space.kv1, j1)?;
    let b2 = local_bspline(&space.kv2, j2)?;
    let make_dir = |b: &crate::spline::Spline1| -> Result<(Vec<f64>, Vec<f64>)> {
        let nodes = support_nodes(&b.kv, n_nodes)?;
        let q = QiOperator::new(&nodes, degree)?;
        let (pkv, g) = product_matrix_1d(q.knots(), b)?;
        let m = &g * q.matrix();
        let ints = DVector::from_fn(pkv.dim(), |r, _| pkv.basis_integral(r));
        let w = (m.transpose() * ints).iter().copied().collect();
        Ok((nodes, w))
    };
    let (nodes1, w1) = make_dir(&b1)?;
    let (nodes2, w2) = make_dir(&b2)?;
    let mut f = Vec::with_capacity(nodes1.len() * nodes2.len());
    let mut jac = Vec::with_capacity(nodes1.len() * nodes2.len());
    for &t2 in &nodes2 {
        for &t1 in &nodes1 {
            let (p, a) = surface.point_and_area([t1, t2])?;
            f.push(p);
            jac.push(a);
        }
    }
    Ok(RegularColumn {
        nodes1,
        nodes2,
        w1,
        w2,
        f,
        jac,
    })
}

impl RegularColumn {
    /// Cubature of U(x, F(t)) B_j(t) J(t) over the support, optionally with an
    /// extra smooth factor on the samples.
    pub fn integrate(&self, x: [f64; 3], factor: Option<&(dyn Fn([f64; 2]) -> f64 + Sync)>) -> f64 {
        let n1 = self.nodes1.len();
        let mut acc = 0.0;
        for (k2, &t2) in self.nodes2.iter().enumerate() {
            let mut inner = 0.0;
            for (k1, &t1) in self.nodes1.iter().enumerate() {
                let idx = k2 * n1 + k1;
                let mut val = laplace_kernel(x, self.f[idx]) * self.jac[idx];
                if let Some(f) = factor {
                    val *= f([t1, t2]);
                }
                inner += self.w1[k1] * val;
            }
            acc += self.w2[k2] * inner;
        }
        acc
    }

    /// Plain and factored cubature in one pass over the nodes, sharing the
    /// kernel evaluations.
    pub fn integrate_pair(
        &self,
        x: [f64; 3],
        factor: &(dyn Fn([f64; 2]) -> f64 + Sync),
    ) -> (f64, f64) {
        let n1 = self.nodes1.len();
        let (mut acc, mut acc_f) = (0.0, 0.0);
        for (k2, &t2) in self.nodes2.iter().enumerate() {
            let (mut inner, mut inner_f) = (0.0, 0.0);
            for (k1, &t1) in self.nodes1.iter().enumerate() {
                let idx = k2 * n1 + k1;
                let val = laplace_kernel(x, self.f[idx]) * self.jac[idx];
                inner += self.w1[k1] * val;
                inner_f += self.w1[k1] * val * factor([t1, t2]);
            }
            acc += self.w2[k2] * inner;
            acc_f += self.w2[k2] * inner_f;
        }
        (acc, acc_f)
    }
}

/// Span-aligned node set on the support of a local basis spline: the
/// n_nodes - 1 subintervals are distributed over the spans, widest first.
fn support_nodes(kv: &KnotVector, n_nodes: usize) -> Result<Vec<f64>> {
    let breaks: Vec<f64> = kv.breakpoints().iter().map(|&(x, _)| x).collect();
    let spans = breaks.len() - 1;
    if n_nodes < spans + 1 {
        return Err(Error::Config(format!(
            "{n_nodes} nodes cannot cover {spans} spans"
        )));
    }
    let base = (n_nodes - 1) / spans;
    let rem = (n_nodes - 1) % spans;
    // extra subintervals go to the widest spans
    let mut order: Vec<usize> = (0..spans).collect();
    order.sort_by(|&i, &j| {
        let wi = breaks[i + 1] - breaks[i];
        let wj = breaks[j + 1] - breaks[j];
        wj.partial_cmp(&wi).unwrap()
    });
    let mut counts = vec![base; spans];
    for &i in order.iter().take(rem) {
        counts[i] += 1;
    }
    let mut nodes = Vec::with_capacity(n_nodes);
    for (k, w) in breaks.windows(2).enumerate() {
        for i in 0..counts[k] {
            nodes.push(w[0] + (w[1] - w[0]) * i as f64 / counts[k] as f64);
        }
    }
    nodes.push(breaks[spans]);
    Ok(nodes)
}

fn build_column(
    surface: &NurbsSurface,
    space: &TensorSplineSpace,
    j: usize,
    cfg: &AssemblyConfig,
) -> Result<ColumnData> {
    let (j1, j2) = space.unflat(j);
    let rect = space.support(j);
    let b1 = local_bspline(&space.kv1, j1)?;
    let b2 = local_bspline(&space.kv2, j2)?;

    let make_dir = |b: &crate::spline::Spline1,
                    n_nodes: usize,
                    degree: usize|
     -> Result<(Vec<f64>, KnotVector, DMatrix<f64>)> {
        let nodes = support_nodes(&b.kv, n_nodes)?;
        let q = QiOperator::new(&nodes, degree)?;
        let (pkv, g) = product_matrix_1d(q.knots(), b)?;
        let m = &g * q.matrix();
        Ok((nodes, pkv, m))
    };
    let (s_nodes1, pkv1, m1) = make_dir(&b1, cfg.qi_nodes_singular, cfg.qi_degree_singular)?;
    let (s_nodes2, pkv2, m2) = make_dir(&b2, cfg.qi_nodes_singular, cfg.qi_degree_singular)?;
    let ext = BezierExtraction::new(&pkv1, &pkv2);
    let a1 = &ext.t1 * &m1;
    let a2 = &ext.t2 * &m2;
    let reg = build_regular_column(surface, space, j, cfg.qi_nodes_regular, cfg.qi_degree_regular)?;

    let mut s_f = Vec::with_capacity(s_nodes1.len() * s_nodes2.len());
    let mut s_jac = Vec::with_capacity(s_nodes1.len() * s_nodes2.len());
    for &t2 in &s_nodes2 {
        for &t1 in &s_nodes1 {
            let (p, a) = surface.point_and_area([t1, t2])?;
            s_f.push(p);
            s_jac.push(a);
        }
    }

    // largest physical element diameter over the support
    let b1s: Vec<f64> = b1.kv.breakpoints().iter().map(|&(x, _)| x).collect();
    let b2s: Vec<f64> = b2.kv.breakpoints().iter().map(|&(x, _)| x).collect();
    let mut max_diam = 0.0f64;
    for e1 in b1s.windows(2) {
        for e2 in b2s.windows(2) {
            let c = |t1: f64, t2: f64| surface.point([t1, t2]);
            let p00 = c(e1[0], e2[0])?;
            let p11 = c(e1[1], e2[1])?;
            let p01 = c(e1[0], e2[1])?;
            let p10 = c(e1[1], e2[0])?;
            let d = |a: [f64; 3], b: [f64; 3]| {
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            };
            max_diam = max_diam.max(d(p00, p11)).max(d(p01, p10));
        }
    }

    Ok(ColumnData {
        rect,
        max_diam,
        s_nodes1,
        s_nodes2,
        ext,
        a1,
        a2,
        s_f,
        s_jac,
        reg,
    })
}

/// Sampling half of a singular or nearly singular entry: rho on the
/// column's QI grid, lifted to Bernstein ordinates of the product knots.
/// `factor` multiplies the smooth samples (used for known-density right-hand
/// sides) and yields a second grid. Returns the grids and the positivity eta
/// the samples needed.
fn extracted_grids(
    exp_base: &KernelExpansion,
    su: [f64; 2],
    col: &ColumnData,
    factor: Option<&(dyn Fn([f64; 2]) -> f64 + Sync)>,
) -> Result<(Vec<DMatrix<f64>>, f64)> {
    let mut exp = exp_base.clone();
    exp.s = su;
    // the correction term is only needed where the truncated expansion stops
    // being positive; start without it and escalate on demand so fine meshes
    // keep the smoother (more accurate) extraction
    exp.eta = 0.0;
    let (n1, n2) = (col.s_nodes1.len(), col.s_nodes2.len());
    let mut samples = DMatrix::zeros(n1, n2);
    let mut samples_f = factor.map(|_| DMatrix::zeros(n1, n2));
    'retry: loop {
        for (k2, &t2) in col.s_nodes2.iter().enumerate() {
            for (k1, &t1) in col.s_nodes1.iter().enumerate() {
                let idx = k2 * n1 + k1;
                let (u, v) = (t1 - su[0], t2 - su[1]);
                let rho = if u * u + v * v < 1e-28 {
                    1.0
                } else {
                    let kf = exp.eval_kf(u, v);
                    if kf <= 0.0 {
                        if exp.eta < exp_base.eta {
                            exp.eta = exp_base.eta;
                            continue 'retry;
                        }
                        if exp_base.eta > 0.0 && exp.eta < 1e3 {
                            exp.eta *= 4.0;
                            continue 'retry;
                        }
                        return Err(Error::Extraction(format!(
                            "nonpositive extracted kernel at offset ({u}, {v}); raise eta"
                        )));
                    }
                    laplace_kernel(exp.x, col.s_f[idx]) / kf
                };
                let val = rho * col.s_jac[idx];
                samples[(k1, k2)] = val;
                if let (Some(sf), Some(f)) = (samples_f.as_mut(), factor) {
                    sf[(k1, k2)] = val * f([t1, t2]);
                }
            }
        }
        break;
    }
    let mut fulls = vec![&col.a1 * samples * col.a2.transpose()];
    if let Some(sf) = samples_f {
        fulls.push(&col.a1 * sf * col.a2.transpose());
    }
    Ok((fulls, exp.eta))
}

/// Regular entry: separable cubature against the point kernel.
fn entry_regular(
    x: [f64; 3],
    col: &ColumnData,
    factor: Option<&(dyn Fn([f64; 2]) -> f64 + Sync)>,
) -> f64 {
    col.reg.integrate(x, factor)
}

/// Assembles the collocation matrix and right-hand side.
pub fn assemble(
    surface: &NurbsSurface,
    space: &TensorSplineSpace,
    colloc: &[[f64; 2]],
    rhs: &RhsSpec,
    cfg: &AssemblyConfig,
) -> Result<Assembly> {
    let n_rows = colloc.len();
    let n_cols = space.dim();
    let expansions: Vec<KernelExpansion> = colloc
        .par_iter()
        .map(|&s| build_expansion(surface, s, cfg.n_terms, cfg.eta))
        .collect::<Result<_>>()?;
    let density = match rhs {
        RhsSpec::KnownDensity(f) => Some(*f),
        RhsSpec::Pointwise(_) => None,
    };
    let columns: Vec<ColumnData> = (0..n_cols)
        .into_par_iter()
        .map(|j| build_column(surface, space, j, cfg))
        .collect::<Result<_>>()?;
    struct RowResult {
        a: Vec<f64>,
        r: f64,
        counts: ClassCounts,
    }
    // row by row: all extracted entries of a row share the collocation
    // point, so they are integrated as one batch with common moments and
    // kernel values on the elements their supports share
    let rows: Vec<RowResult> = (0..n_rows)
        .into_par_iter()
        .map(|i| -> Result<RowResult> {
            let exp = &expansions[i];
            let mut a = vec![0.0; n_cols];
            let mut rhs_acc = 0.0;
            let mut counts = ClassCounts::default();
            let mut batch = Vec::new();
            let mut batch_cols = Vec::new();
            for (j, col) in columns.iter().enumerate() {
                let (class, su) =
                    classify(surface, exp.x, exp.s, col.rect, col.max_diam, cfg.near_threshold)?;
                match class {
                    EntryClass::Regular => {
                        counts.regular += 1;
                        match density {
                            Some(psi) => {
                                let (av, rv) = col.reg.integrate_pair(exp.x, psi);
                                a[j] = av;
                                rhs_acc += rv;
                            }
                            None => a[j] = entry_regular(exp.x, col, None),
                        }
                    }
                    _ => {
                        if class == EntryClass::Singular {
                            counts.singular += 1;
                        } else {
                            counts.near_singular += 1;
                        }
                        let (fulls, eta) = extracted_grids(exp, su, col, density)?;
                        batch.push(BatchEntry {
                            su,
                            eta,
                            ext: &col.ext,
                            fulls,
                        });
                        batch_cols.push(j);
                    }
                }
            }
            let results = integrate_extracted_batch(exp, &batch, cfg.rel_tol);
            for (vals, &j) in results.iter().zip(&batch_cols) {
                a[j] = vals[0];
                if density.is_some() {
                    rhs_acc += vals[1];
                }
            }
            let r = match rhs {
                RhsSpec::Pointwise(g) => g(exp.x),
                RhsSpec::KnownDensity(_) => rhs_acc,
            };
            Ok(RowResult { a, r, counts })
        })
        .collect::<Result<_>>()?;
    let mut matrix = DMatrix::zeros(n_rows, n_cols);
    let mut counts = ClassCounts::default();
    for (i, row) in rows.iter().enumerate() {
        for j in 0..n_cols {
            matrix[(i, j)] = row.a[j];
        }
        counts.singular += row.counts.singular;
        counts.near_singular += row.counts.near_singular;
        counts.regular += row.counts.regular;
    }
    let rhs_vec = DVector::from_fn(n_rows, |i, _| rows[i].r);
    Ok(Assembly {
        matrix,
        rhs: rhs_vec,
        counts,
    })
}
