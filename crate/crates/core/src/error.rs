use thiserror::Error;

/// Errors produced by the model, the solvers and the simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("multiplier {index} = {value} outside the domain [0, {sojourn})")]
    Domain {
        index: usize,
        value: f64,
        sojourn: f64,
    },

    #[error("wrong demand variant: expected {expected}")]
    WrongDemandVariant { expected: &'static str },

    #[error("component {index} = {value} is not in the probability simplex")]
    NotInSimplex { index: usize, value: f64 },

    #[error(
        "solver did not converge in {iterations} iterations (projected gradient {residual:e})"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("empty post-warmup window")]
    EmptyWindow,

    #[error("infeasible flow problem: {0}")]
    Infeasible(String),

    #[error("at r = {rate}: {source}")]
    Sweep {
        rate: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
