use qbd_core::ErrorKind;
use serde::Serialize;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const MISMATCH: i32 = 1;
    pub const APPLICABILITY: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const INPUT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{method} is not applicable: {message}")]
    Applicability { method: String, message: String },
    #[error("{method} failed: {message}")]
    Numerical { method: String, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {pairs} comparisons exceed tolerance {tol:e}")]
    Mismatch { failed: usize, pairs: usize, tol: f64 },
}

impl CliError {
    pub fn from_kind(kind: ErrorKind, method: &str, message: String) -> Self {
        match kind {
            ErrorKind::Applicability => CliError::Applicability {
                method: method.to_string(),
                message,
            },
            ErrorKind::Numerical => CliError::Numerical {
                method: method.to_string(),
                message,
            },
            ErrorKind::Input => CliError::Input(format!("{method}: {message}")),
        }
    }

    pub fn io(path: &str, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Mismatch { .. } => exit::MISMATCH,
            CliError::Applicability { .. } => exit::APPLICABILITY,
            CliError::Numerical { .. } => exit::NUMERICAL,
            CliError::Input(_) | CliError::Io { .. } => exit::INPUT,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CliError::Mismatch { .. } => "mismatch",
            CliError::Applicability { .. } => "applicability",
            CliError::Numerical { .. } => "numerical",
            CliError::Input(_) | CliError::Io { .. } => "input",
        }
    }

    pub fn to_report(&self) -> ErrorReport {
        let method = match self {
            CliError::Applicability { method, .. } | CliError::Numerical { method, .. } => Some(method.clone()),
            _ => None,
        };
        let restriction = match self {
            CliError::Applicability { method, .. } => restriction(method),
            _ => None,
        };
        ErrorReport {
            kind: self.kind_name(),
            exit_code: self.exit_code(),
            method,
            message: self.to_string(),
            restriction,
        }
    }
}

/// Machine-readable error, written to stderr on failure.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restriction: Option<&'static str>,
}

/// Structural requirement each method places on the homogeneous part.
pub fn restriction(method: &str) -> Option<&'static str> {
    Some(match method {
        "qdesa" => "transitions to a lower level may only enter that level's entrance state",
        "qdesa+" => "as qdesa, and every within-level block is birth-death (tridiagonal)",
        "qdesa++" => "as qdesa+, and the chain is level homogeneous with element-homogeneous interior blocks",
        "lpca" => {
            "homogeneous stages: nearest-neighbour moves within a level and to 'NE', 'E', 'SE' only, \
             element homogeneous, no 'NW', 'W' or 'SW' moves, equal level sizes"
        }
        _ => return None,
    })
}
