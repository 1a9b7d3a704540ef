//! Numerical comparison geometry on embedded test manifolds.
//!
//! The crate is organised bottom-up:
//!
//! - [`manifold`]: built-in spaces (flat, spheres, hyperboloids, diagonal
//!   quadrics, 2-D model surfaces) with normal, shape operator and curvature.
//! - [`geodesic`]: fourth-order geodesic and parallel-frame integration,
//!   exponential map, distances, curve lifting and the small-scale
//!   distance experiments.
//! - [`jacobi`]: the operator-valued Jacobi flow in a parallel frame, focal
//!   and conjugate point detection, index forms and flow estimates.
//! - [`comparison`]: model-space trigonometry and the Rauch, Berger and
//!   Toponogov style checkers.

pub mod comparison;
pub mod error;
pub mod geodesic;
pub mod jacobi;
pub mod manifold;
pub mod report;
pub mod rng;

mod linalg;
mod ode;

pub use error::{GeometryError, Result};
pub use manifold::{ManifoldKind, ManifoldSpec, Point, TangentVector, Vector};
