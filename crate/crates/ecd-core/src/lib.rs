//! Counterdiabatic driving toolkit for small driven quantum systems.
//!
//! The crate computes exact counterdiabatic fields, synthesizes oscillating corrections that
//! reproduce them through the original control channels, and propagates the resulting dynamics.
//! Time is rescaled to s ∈ [0, 1] and every system evolves as i∂_s U = τ H(s) U with ħ = 1.

pub mod algebra;
pub mod cdfield;
pub mod ecd;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod magnus;
pub mod models;
pub mod quad;

pub use error::{Error, Result};
