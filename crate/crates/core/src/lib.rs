//! Numerical spectral analysis of the self-adjoint operator pencil built
//! from the bending form of a positive stiffness p against the
//! gradient-plus-weighted-mass family on [0,1], under clamped-clamped or
//! clamped mass-end conditions.
//!
//! The crate computes both spectrum branches with eigenfunctions, locates
//! their interior zeros, reduces the problem to a second-order model via a
//! one-dimensional change of variables, and verifies the qualitative
//! spectral statements (counts, simplicity, interlacing, admissibility,
//! congruence of the transform) on concrete instances.

pub mod assembly;
pub mod error;
pub mod eigen;
pub mod linalg;
pub mod oscillation;
pub mod problem;
pub mod sturm;
pub mod verify;

pub use error::{Error, Result};
