use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("matrix is not positive semidefinite (Cholesky pivot {pivot} = {value:e})")]
    NotPsd { pivot: usize, value: f64 },

    #[error(
        "sketch core is numerically rank deficient (condition number {condition:e}); \
         increase the second probe block or use Nystrom++"
    )]
    RankDeficient { condition: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TraceError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        TraceError::Parameter(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TraceError::Domain(_)
                | TraceError::Solver { .. }
                | TraceError::NotPsd { .. }
                | TraceError::RankDeficient { .. }
        )
    }
}
