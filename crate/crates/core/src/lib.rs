//! Optimal control of parabolic interface problems with control acting on the
//! interface.
//!
//! The state equation `y_t - div(beta grad y) = f` is posed on `(-1,1)^2` with a
//! piecewise constant conductivity that jumps across a level-set interface. The
//! flux jump across the interface carries the control. Space is discretized with
//! the stable generalized finite element method (linear elements enriched at
//! nodes of cut elements by a one-sided distance function minus its nodal
//! interpolant), time with backward Euler, and the control by the variational
//! (projection) approach, solved with a fixed-point iteration.
//!
//! Module map:
//! - [`geometry`]: level-set interfaces, element classification, cut subdivision.
//! - [`mesh`]: uniform triangulation of the square.
//! - [`quadrature`]: reference rules and cut-aware composite rules.
//! - [`space`]: the enriched approximation space and its constraints.
//! - [`assembly`]: matrices, loads, elliptic projection.
//! - [`linalg`]: sparse storage and the envelope Cholesky solver.
//! - [`solver`]: forward and adjoint time stepping.
//! - [`optimizer`]: admissible sets, reduced cost and gradient, fixed-point loop.
//! - [`manufactured`]: the shipped example problems.
//! - [`analysis`]: space-time error norms and convergence orders.
//! - [`driver`]: convergence studies, config parsing, CSV and field dumps.

pub mod analysis;
pub mod assembly;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod manufactured;
pub mod mesh;
pub mod optimizer;
pub mod quadrature;
pub mod solver;
pub mod space;

pub use error::{Error, Result};

/// Points and vectors in the plane.
pub type Vec2 = nalgebra::Vector2<f64>;
