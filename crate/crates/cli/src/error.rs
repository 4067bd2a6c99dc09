use std::error::Error as _;
use std::path::PathBuf;

use thiserror::Error;

use uav_secrecy::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum ConfigParseError {
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{origin}:{line}:{column}: unknown key `{key}`")]
    UnknownKey {
        origin: String,
        line: usize,
        column: usize,
        key: String,
    },

    #[error("{origin}:{line}: key `{key}` repeats line {first}")]
    DuplicateKey {
        origin: String,
        line: usize,
        key: String,
        first: usize,
    },

    #[error("{origin}:{line}:{column}: invalid value for `{key}`: {message}")]
    InvalidValue {
        origin: String,
        line: usize,
        column: usize,
        key: &'static str,
        message: String,
    },

    #[error("missing required key `{key}`")]
    MissingKey { key: &'static str },

    #[error("unknown preset `{0}` (expected one of case1-u2g, case1-g2u, case2-u2g, case2-g2u)")]
    UnknownPreset(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Every violated scenario invariant, per offending sweep point.
#[derive(Debug, Error)]
#[error("invalid scenario{}", render_violations(.violations))]
pub struct ValidationError {
    pub violations: Vec<(String, Vec<ScenarioError>)>,
}

fn render_violations(v: &[(String, Vec<ScenarioError>)]) -> String {
    v.iter()
        .map(|(ctx, errs)| {
            let list: Vec<_> = errs.iter().map(|e| format!("\n    - {e}")).collect();
            format!("\n  {ctx}:{}", list.concat())
        })
        .collect()
}

#[derive(Debug, Error)]
#[error("solver failed: {}", chain(.0))]
pub struct SolverError(#[source] pub uav_secrecy::Error);

fn chain(e: &uav_secrecy::Error) -> String {
    let mut parts = vec![e.to_string()];
    let mut cur = e.source();
    while let Some(s) = cur {
        parts.push(s.to_string());
        cur = s.source();
    }
    parts.join(": ")
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigParseError),

    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Validation(_) => 3,
            RunError::Solver(_) => 4,
            RunError::Write { .. } => 5,
        }
    }
}
