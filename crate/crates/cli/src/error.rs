use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read or write `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("`{path}` is not a valid config: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config has {} issue(s): {}", .0.len(), summary(.0))]
    Invalid(Vec<Issue>),

    #[error("restriction `{name}`: {message}")]
    Restriction { name: String, message: String },

    #[error(transparent)]
    Core(#[from] ddc_ident::Error),
}

/// One problem found while validating a config, tied to the field it concerns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl Issue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn summary(issues: &[Issue]) -> String {
    let parts: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
    parts.join("; ")
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) | CliError::Invalid(_) => "invalid_config",
            CliError::Restriction { .. } => "restriction",
            CliError::Core(_) => "computation",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut e = serde_json::json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Invalid(issues) = self {
            e["issues"] = serde_json::to_value(issues).unwrap_or_default();
        }
        serde_json::json!({ "error": e })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
