use std::path::PathBuf;

use crate::sparse::SolverReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },

    #[error("matrix is singular at dof {index}")]
    Singular { index: usize },

    #[error("conflicting Dirichlet values for dof {dof}: {first} vs {second}")]
    Constraint { dof: usize, first: f64, second: f64 },

    #[error("linear solve failed in {stage}: residual {:.3e} after {} iterations", report.residual, report.iterations)]
    Solver { stage: &'static str, report: SolverReport },

    #[error("{stage} step failed: {source}")]
    Step {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Step { stage, source: Box::new(self) }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
