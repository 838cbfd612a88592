//! Simulation and verification of critical fluctuations at a stochastic
//! Hopf bifurcation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod normalform;
pub mod polyfield;
pub mod sde;
pub mod spectral;
pub mod stats;
pub mod system;

pub use polyfield::{PolyMap, PolyMatrix};
pub use system::{HopfSystem, PreparedSystem};
