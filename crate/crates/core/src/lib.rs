//! Numerical laboratory for mixed elliptic-hyperbolic equations of Keldysh type,
//! `K(x) u_xx + c(x) u_x + u_yy = f` with `x K(x) > 0` away from the sonic line `x = 0`.
//!
//! The crate covers type-change functions, characteristic tracing and the
//! mixed domains they bound, cut-cell grids and quadrature, the operators and
//! their adjoints, the abc multiplier energy identity, the ξ field along
//! characteristics and a least-squares solver for boundary value experiments.

pub mod abc;
pub mod cli;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod operators;
pub mod quadrature;
pub mod solver;
pub mod typechange;
pub mod xifield;

pub use error::{LabError, Result};
