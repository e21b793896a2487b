//! B-spline foundations: knot vectors, univariate and tensor-product
//! splines, and coefficient extraction via dual functionals.

mod knots;
mod spline1;
mod spline2;

pub use knots::KnotVector;
pub use spline1::{
    anchor_for_basis, coefficients_from_ders, local_bspline, DualFunctional, Spline1,
};
pub use spline2::{BezierExtraction, Spline2, TensorSplineSpace};
