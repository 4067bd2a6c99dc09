use thiserror::Error;

use crate::orchestrator::Scheme;
use crate::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected} slots, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid scenario: {}", join_errors(.0))]
    Validation(Vec<ScenarioError>),

    #[error("power control domain error: {0}")]
    Domain(String),

    #[error("convex solver: {0}")]
    Solver(#[from] crate::convex_core::SolveError),

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("{scheme} failed at iteration {iteration}")]
    AtIteration {
        scheme: Scheme,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{scheme} failed at {axis} = {value}")]
    AtSweepPoint {
        scheme: Scheme,
        axis: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

fn join_errors(errs: &[ScenarioError]) -> String {
    errs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
