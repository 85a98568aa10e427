use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("stage `{stage}` needs the output of stage `{missing}`; run `{missing}` first")]
    MissingDependency { stage: String, missing: String },

    #[error("stage `{stage}`: upstream stage `{upstream}` is stale ({reason}); rerun it first")]
    StaleUpstream {
        stage: String,
        upstream: String,
        reason: String,
    },

    #[error("unknown stage `{0}`")]
    UnknownStage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] tagprof_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingDependency { .. } => "missing_dependency",
            CliError::StaleUpstream { .. } => "stale_upstream",
            CliError::UnknownStage(_) => "unknown_stage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(_) => "pipeline",
            CliError::Json(_) => "json",
            CliError::Csv(_) => "csv",
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            CliError::MissingDependency { stage, missing } => {
                body["stage"] = json!(stage);
                body["missing"] = json!(missing);
            }
            CliError::StaleUpstream { stage, upstream, .. } => {
                body["stage"] = json!(stage);
                body["upstream"] = json!(upstream);
            }
            CliError::UnknownStage(s) => body["stage"] = json!(s),
            _ => {}
        }
        json!({ "error": body })
    }
}
