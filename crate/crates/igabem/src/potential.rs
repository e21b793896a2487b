//! Post-processing: density error norms on the surface, evaluation of the
//! single layer potential away from it, and convergence-rate helpers.

use crate::assembly::{build_regular_column, AssemblyConfig, RegularColumn};
use crate::error::{Error, Result};
use crate::nurbs::NurbsSurface;
use crate::quadrature::gauss_legendre;
use crate::spline::TensorSplineSpace;
use nalgebra::DVector;
use rayon::prelude::*;

/// L2(Gamma) norm of psi - psi_h, by per-element tensor Gauss of order
/// degree + 3 in each direction.
pub fn density_error_l2<F>(
    exact: F,
    coeffs: &DVector<f64>,
    surface: &NurbsSurface,
    space: &TensorSplineSpace,
) -> Result<f64>
where
    F: Fn([f64; 2]) -> f64 + Sync,
{
    let order = space.kv1.degree().max(space.kv2.degree()) + 3;
    let (nodes, weights) = gauss_legendre(order);
    let b1: Vec<f64> = space.kv1.breakpoints().iter().map(|&(x, _)| x).collect();
    let b2: Vec<f64> = space.kv2.breakpoints().iter().map(|&(x, _)| x).collect();
    let elems: Vec<(usize, usize)> = (0..b1.len() - 1)
        .flat_map(|e1| (0..b2.len() - 1).map(move |e2| (e1, e2)))
        .collect();
    let total: f64 = elems
        .par_iter()
        .map(|&(e1, e2)| -> Result<f64> {
            let (a1, w1) = (b1[e1], b1[e1 + 1] - b1[e1]);
            let (a2, w2) = (b2[e2], b2[e2 + 1] - b2[e2]);
            let mut acc = 0.0;
            for (k2, &x2) in nodes.iter().enumerate() {
                let t2 = a2 + w2 * 0.5 * (x2 + 1.0);
                for (k1, &x1) in nodes.iter().enumerate() {
                    let t1 = a1 + w1 * 0.5 * (x1 + 1.0);
                    let (_, jac) = surface.point_and_area([t1, t2])?;
                    let vh = space.value(coeffs, [t1, t2]);
                    let d = exact([t1, t2]) - vh;
                    acc += weights[k1] * weights[k2] * d * d * jac;
                }
            }
            Ok(acc * w1 * w2 * 0.25)
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(total.sqrt())
}

/// Single layer potential evaluator: precomputes the regular cubature data of
/// every trial function once, then evaluates u_h at exterior points.
pub struct PotentialEvaluator {
    columns: Vec<RegularColumn>,
    coeffs: DVector<f64>,
    /// coarse surface point cloud for the near-field distance guard
    guard: Vec<[f64; 3]>,
    min_dist: f64,
}

impl PotentialEvaluator {
    pub fn new(
        surface: &NurbsSurface,
        space: &TensorSplineSpace,
        coeffs: DVector<f64>,
        cfg: &AssemblyConfig,
    ) -> Result<Self> {
        let columns: Vec<RegularColumn> = (0..space.dim())
            .into_par_iter()
            .map(|j| {
                build_regular_column(surface, space, j, cfg.qi_nodes_regular, cfg.qi_degree_regular)
            })
            .collect::<Result<_>>()?;
        let dom = surface.domain();
        let mut guard = Vec::new();
        let n = 24;
        for i in 0..=n {
            for k in 0..=n {
                let t1 = dom[0][0] + (dom[0][1] - dom[0][0]) * i as f64 / n as f64;
                let t2 = dom[1][0] + (dom[1][1] - dom[1][0]) * k as f64 / n as f64;
                guard.push(surface.point([t1, t2])?);
            }
        }
        let h = space.mesh_size();
        let min_dist = cfg.near_threshold * h * 2.0;
        Ok(Self {
            columns,
            coeffs,
            guard,
            min_dist,
        })
    }

    /// u_h(x) via the representation formula; refuses points too close to the
    /// surface where the regular rule degrades.
    pub fn eval(&self, x: [f64; 3]) -> Result<f64> {
        let d2 = self
            .guard
            .iter()
            .map(|p| {
                (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2) + (x[2] - p[2]).powi(2)
            })
            .fold(f64::INFINITY, f64::min);
        if d2.sqrt() < self.min_dist {
            return Err(Error::Config(format!(
                "evaluation point within {:.3} of the surface; near-field is unsupported",
                self.min_dist
            )));
        }
        Ok(self
            .columns
            .iter()
            .zip(self.coeffs.iter())
            .map(|(col, &c)| c * col.integrate(x, None))
            .sum())
    }

    /// Evaluates u_h at many points in parallel.
    pub fn eval_many(&self, xs: &[[f64; 3]]) -> Result<Vec<f64>> {
        xs.par_iter().map(|&x| self.eval(x)).collect()
    }
}

/// 2^(m+2) quasi-uniform points on the sphere of radius 10 (Fibonacci spiral).
pub fn sphere_sample(m: usize) -> Vec<[f64; 3]> {
    let n = 1usize << (m + 2);
    let radius = 10.0;
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            [radius * r * phi.cos(), radius * r * phi.sin(), radius * z]
        })
        .collect()
}

/// Empirical orders of convergence between consecutive (error, mesh) pairs.
pub fn eoc(errors: &[f64], h: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, hh)| (e[0] / e[1]).ln() / (hh[0] / hh[1]).ln())
        .collect()
}
