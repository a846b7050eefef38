//! Spectral geometry on structured grids.
//!
//! The crate builds discrete Laplace-Beltrami operators on a catalog of
//! curved and flat charts (plus user-supplied diagonal metrics), computes
//! measure-orthonormal eigenbases, resolves spectral degeneracy with
//! commuting symmetry operators, verifies Killing/separability structure,
//! and classifies the resulting transform by algebraic completeness and
//! label-space topology.
//!
//! Start with [`manifold::ManifoldSpec`] and the runnable examples.

pub mod classify;
pub mod error;
pub mod expr;
pub mod flow;
pub mod grid;
pub mod harmonics;
pub mod io;
pub mod killing;
mod lapack;
pub mod manifold;
pub mod op;
pub mod report;
pub mod spectral;
pub mod sparse;
pub mod symmetry;

pub use error::{GftError, Result};
