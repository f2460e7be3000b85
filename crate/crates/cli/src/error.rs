use std::fmt;

use serde::Serialize;
use tailqr::{DataError, QrError, SimError, TailError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Validation,
    Numerical,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Validation => 2,
            Kind::Numerical => 3,
            Kind::Io => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Validation,
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Numerical,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Io,
            message: msg.into(),
        }
    }

    /// `{"error": {"kind": ..., "exit_code": ..., "message": ...}}`
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "exit_code": self.kind.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } | DataError::Csv(_) => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<QrError> for CliError {
    fn from(e: QrError) -> Self {
        match e {
            QrError::NotConverged { .. } | QrError::RankDeficient => {
                CliError::numerical(e.to_string())
            }
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<TailError> for CliError {
    fn from(e: TailError) -> Self {
        match e {
            TailError::Solver(q) => q.into(),
            TailError::NonPositiveQuantile { .. }
            | TailError::NonPositiveBase(_)
            | TailError::AllLambdasFailed => CliError::numerical(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::validation(e.to_string()),
            SimError::TooManyFailures { .. } => CliError::numerical(e.to_string()),
            SimError::Tail(t) => t.into(),
            SimError::Solver(q) => q.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
