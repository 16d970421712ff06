//! Numerical toolkit for free-time optimal control with relaxed controls.
//!
//! * [`systems`]: polynomial dynamics, control sets and the scenario registry.
//! * [`relaxed`]: finitely supported relaxed controls and admissibility audits.
//! * [`integrate`]: fixed-step RK4 for state, relaxed and adjoint equations.
//! * [`pmp`]: Hamiltonian, maximum function and the multiplier-set certificate.
//! * [`chattering`]: ordinary approximations of relaxed controls.
//! * [`attain`]: constructive attainability before or after the reference time.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attain;
pub mod chattering;
pub mod error;
pub mod format;
pub mod integrate;
mod linalg;
pub mod pmp;
pub mod relaxed;
pub mod systems;

pub use error::{Error, Result};
