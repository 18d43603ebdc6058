//! Schrödinger bridges on a uniform 1-D grid.
//!
//! The classical side solves Schrödinger's system for a Wiener reference by
//! log-domain Sinkhorn iteration ([`bridge`]) and measures path-space
//! relative entropy through the Girsanov decompositions ([`entropy`]). The
//! quantum side evolves wavefunctions with Crank-Nicolson, extracts Nelson's
//! drifts, and builds the post-measurement bridge and the collapsed state
//! ([`quantum`]). [`sde`] simulates the corresponding diffusions forward and
//! in reverse time so every density claim can be checked by Monte Carlo.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod quantum;
pub mod sde;

pub use error::{Error, Result};
pub use grid::{ComplexField, DensityField, Grid1D, ScalarField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
