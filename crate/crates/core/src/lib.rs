//! Regularizers that admit linear representer theorems.
//!
//! The crate is organized around five pieces:
//!
//! * [`regzoo`]: vector and matrix regularizers, their gradients and the
//!   induced function `h` with `Omega(W) = h(W^T W)`.
//! * [`admissibility`]: sampled property checks that either find a
//!   counterexample to admissibility or report that none was found.
//! * [`solvers`]: interpolation and regularization solvers in full space and
//!   in the reduced (span of the inputs) parameterization.
//! * [`constructions`]: rotations, skew generators, PSD square roots and the
//!   norm-preserving paths used to extract `h`.
//! * [`data`]: CSV datasets and synthetic multi-task problems.

pub mod admissibility;
pub mod constructions;
pub mod data;
pub mod error;
pub mod linalg;
pub mod regzoo;
pub mod solvers;

pub use error::{Error, Result};

/// Library version stamped into reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
