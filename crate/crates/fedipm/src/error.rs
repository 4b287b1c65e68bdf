use std::io;
use std::path::PathBuf;

use serde::Serialize;

/// Failures surfaced by the command-line tools, each with a fixed exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: malformed JSON at line {line}, column {column}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    InvalidFile { path: PathBuf, message: String },

    #[error("invalid arguments: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Solver(#[from] fedipm_core::Error),

    #[error("iteration cap reached before the termination rule was met")]
    IterationCap,
}

/// The machine-readable form written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    pub exit_code: i32,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Json { .. } | CliError::InvalidFile { .. } | CliError::Usage(_) => 2,
            CliError::IterationCap => 3,
            CliError::Io { .. } => 4,
            CliError::Solver(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Json { .. } => "malformed_json",
            CliError::InvalidFile { .. } => "invalid_problem",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Solver(_) => "solver",
            CliError::IterationCap => "iteration_cap",
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (line, column) = match self {
            CliError::Json { line, column, .. } => (Some(*line), Some(*column)),
            _ => (None, None),
        };
        ErrorReport {
            kind: self.kind(),
            message: self.to_string(),
            line,
            column,
            exit_code: self.exit_code(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
