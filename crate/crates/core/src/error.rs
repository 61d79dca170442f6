//! Error types for every layer, plus the process exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("horizon must be positive and finite, got {0}")]
    NonPositiveHorizon(f64),
    #[error("cannot fit {conditions} conditions with degree {degree}: {reason}")]
    SingularFit {
        conditions: usize,
        degree: usize,
        reason: &'static str,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MuscleError {
    #[error("invalid muscle parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("tendon force {0} is not positive; slack tendon is not invertible")]
    NonPositiveForce(f64),
    #[error("{quantity} {value} is outside the admissible domain")]
    Domain { quantity: &'static str, value: f64 },
    #[error("activation {0} is at or below the activation floor")]
    ZeroActivation(f64),
    #[error(
        "no neural input in [0, 1] gives rate {a_dot} at activation {a} (reachable [{min_rate}, {max_rate}])"
    )]
    NoRootInUnitInterval {
        a: f64,
        a_dot: f64,
        min_rate: f64,
        max_rate: f64,
    },
    #[error("activation rate is not monotone in the neural input at activation {a}")]
    NonMonotoneExcitation { a: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlatnessError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("stacked matrix C = [A; E] is singular (condition number {condition:e})")]
    SingularC { condition: f64 },
    #[error("row {row} of E sums to {sum}, expected 1")]
    RowSumViolation { row: usize, sum: f64 },
    #[error("1 - C_tau sigma_tau is not positive in row {row} (value {value})")]
    FeasibilityConditionViolation { row: usize, value: f64 },
    #[error("tendon force {force} of muscle {muscle} at t = {time} is not positive")]
    SlackViolation { time: f64, muscle: usize, force: f64 },
    #[error("muscle {muscle} at t = {time}: {source}")]
    Muscle {
        time: f64,
        muscle: usize,
        #[source]
        source: MuscleError,
    },
    #[error("activation {value} of muscle {muscle} at t = {time} is outside [floor, 1]")]
    ActivationOutOfRange { time: f64, muscle: usize, value: f64 },
    #[error("mass matrix is singular at the given configuration")]
    SingularMass,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("polynomial degree {0} is odd; SOS needs an even degree")]
    OddDegree(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SopError {
    #[error("output {output} has {constraints} equalities but degree {degree} allows at most {degree}")]
    DegreeTooLow {
        output: usize,
        constraints: usize,
        degree: usize,
    },
    #[error("sigma = C_Y 1 has non-positive entry {value} in row {row}")]
    NonPositiveSigma { row: usize, value: f64 },
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
    #[error("solver finished with status {0:?}")]
    Status(crate::solvers::SolveStatus),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Flatness(#[from] FlatnessError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("muscle {muscle} at t = {time}: {source}")]
    Domain {
        time: f64,
        muscle: usize,
        #[source]
        source: MuscleError,
    },
    #[error("step size collapsed to {step:e} at t = {time}")]
    StepFailure { time: f64, step: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("invalid integration request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

/// Any failure surfaced to the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Muscle(#[from] MuscleError),
    #[error(transparent)]
    Flatness(#[from] FlatnessError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sop(#[from] SopError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("receding-horizon step {step}: {reason}")]
    RecedingHorizon { step: usize, reason: String, code: i32 },
    #[error("cannot write output: {0}")]
    Output(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

fn flatness_code(e: &FlatnessError) -> i32 {
    match e {
        FlatnessError::Dimension(_)
        | FlatnessError::SingularC { .. }
        | FlatnessError::RowSumViolation { .. }
        | FlatnessError::FeasibilityConditionViolation { .. } => EXIT_CONFIG,
        FlatnessError::SingularMass => EXIT_NUMERICAL,
        _ => EXIT_INFEASIBLE,
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        use crate::solvers::SolveStatus;
        match self {
            Error::Config(_) | Error::Muscle(MuscleError::InvalidParams { .. }) => EXIT_CONFIG,
            Error::Poly(_) | Error::Solver(_) => EXIT_CONFIG,
            Error::Muscle(_) => EXIT_INFEASIBLE,
            Error::Flatness(e) => flatness_code(e),
            Error::Sop(e) => match e {
                SopError::Status(SolveStatus::Infeasible | SolveStatus::Unbounded) => {
                    EXIT_INFEASIBLE
                }
                SopError::Status(_) => EXIT_NUMERICAL,
                SopError::Flatness(f) => flatness_code(f),
                SopError::NonPositiveSigma { .. } => EXIT_CONFIG,
                _ => EXIT_CONFIG,
            },
            Error::Sim(SimError::Domain { .. }) => EXIT_INFEASIBLE,
            Error::Sim(_) => EXIT_NUMERICAL,
            Error::RecedingHorizon { code, .. } => *code,
            Error::Output(_) => EXIT_NUMERICAL,
        }
    }
}
