//! Small dense LP and SDP solvers and the univariate SOS encoding.

/// Termination status shared by the LP and SDP solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

pub mod lp;
pub mod sdp;
pub mod sos;

pub use lp::{solve_lp, LinearProgram, LpSolution};
pub use sdp::{solve_sdp, SdpConstraint, SdpOptions, SdpSolution, SemidefiniteProgram};
pub use sos::{AffineExpr, GramEncoding, SdpBuilder};
