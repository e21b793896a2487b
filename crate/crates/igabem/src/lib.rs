//! Isogeometric collocation BEM for the 3D exterior Laplace problem on
//! single-patch NURBS surfaces, with quasi-interpolation based cubature for
//! the singular, nearly singular, and regular boundary integrals.

pub mod assembly;
pub mod checks;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod nurbs;
pub mod poly;
pub mod potential;
pub mod product;
pub mod qi;
pub mod quadrature;
pub mod spline;

pub use error::{Error, Result};
