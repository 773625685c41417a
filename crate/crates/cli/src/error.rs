use std::path::PathBuf;

use serde::Serialize;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_FAILURE: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: stealthcurve::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} verification rows exceed their tolerance")]
    VerifyFailed { failed: usize, total: usize },
    #[error("{failed} of {total} targets failed; see the report for per-target errors")]
    TargetsFailed { failed: usize, total: usize },
}

/// Machine-readable form written to stderr and into reports.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub message: String,
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation { field: field.into(), message: message.into() }
    }

    /// Wraps a library error, qualifying argument names with `context`.
    pub fn from_core(context: &str, source: stealthcurve::Error) -> Self {
        let context = match &source {
            stealthcurve::Error::InvalidArgument { field, .. } if !context.ends_with(field) => {
                format!("{context}.{field}")
            }
            _ => context.to_string(),
        };
        CliError::Core { context, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::Core { source, .. } if source.is_validation() => EXIT_VALIDATION,
            _ => EXIT_FAILURE,
        }
    }

    pub fn info(&self) -> ErrorInfo {
        let (kind, field, target) = match self {
            CliError::Validation { field, .. } => ("validation", Some(field.clone()), None),
            CliError::Core { context, source } => {
                let target = match source {
                    stealthcurve::Error::AtTarget { target, .. } => Some(*target),
                    _ => None,
                };
                let kind = if source.is_validation() { "validation" } else { "solver" };
                (kind, Some(context.clone()), target)
            }
            CliError::Io { .. } => ("io", None, None),
            CliError::VerifyFailed { .. } => ("tolerance", None, None),
            CliError::TargetsFailed { .. } => ("solver", None, None),
        };
        ErrorInfo { kind: kind.into(), exit_code: self.exit_code(), field, target, message: self.to_string() }
    }
}
