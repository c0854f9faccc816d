use std::path::PathBuf;

use qproc::QprocError;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Schema(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] QprocError),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

#[derive(Serialize)]
struct ErrorObject<'a> {
    error: ErrorBody<'a>,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Schema(_) => "schema",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                QprocError::Argument(_) => "argument",
                QprocError::Resource { .. } => "resource",
                QprocError::UnsupportedDimension(_) => "unsupported-dimension",
                QprocError::UnsupportedCorner(_) => "unsupported-generic-corner",
                QprocError::Numerical { .. } => "numerical",
                QprocError::Estimation(_) => "estimation",
                QprocError::DegenerateModel { .. } => "degenerate-model",
                QprocError::UnboundedVariance { .. } => "unbounded-variance",
                QprocError::ChainViolation { .. } => "chain-violation",
                QprocError::InvariantViolation(_) => "invariant-violation",
                QprocError::InconsistentDerivative { .. } => "inconsistent-derivative",
                QprocError::Model(_) => "model",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Schema(_) | CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                QprocError::Argument(_)
                | QprocError::Resource { .. }
                | QprocError::UnsupportedDimension(_)
                | QprocError::UnsupportedCorner(_) => EXIT_USAGE,
                _ => EXIT_VERIFICATION,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let obj = ErrorObject {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                exit_code: self.exit_code(),
            },
        };
        serde_json::to_string(&obj).unwrap_or_else(|_| "{\"error\":{}}".into())
    }
}
