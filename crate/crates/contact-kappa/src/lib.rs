//! Numerical differential geometry of 3D contact sub-Riemannian structures:
//! characteristic deviation and geodesic curvature of horizontal curves,
//! Hamiltonian geodesic flow with variational (Jacobi) data, sub-Riemannian
//! distance by multi-start shooting, and the distance-expansion experiments
//! built on top of them.

pub mod config;
pub mod curve;
pub mod distance;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod expansion;
pub mod flow;
pub mod ode;
pub mod run;

pub use error::{Error, Result};
