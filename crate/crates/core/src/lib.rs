//! Flatness-based motion optimization for muscle-driven planar linkages.
//!
//! A trajectory is described by flat outputs `y = [q; Y]`: joint angles plus
//! muscle co-contractions `Y = E·Φ_S(L_S)`. Polynomial flat outputs are chosen
//! by a convex program (SOS/SDP, or an LP when `Y` is constant), then mapped
//! back to states and neural inputs and checked by forward simulation.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod flatness;
pub mod linkage;
pub mod mpc;
pub mod muscle;
pub mod poly;
pub mod scenario;
pub mod sim;
pub mod solvers;
pub mod sop;

pub use error::Error;
