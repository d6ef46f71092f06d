//! Batch driver: configuration, comb orchestration with checkpoints, CSV and
//! provenance output, oracle checks, the Kitaev comparison and fits.

pub mod args;
pub mod config;
pub mod fit;
pub mod output;
pub mod run;

use std::path::PathBuf;

use serde_json::json;

pub use args::Cli;
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("i/o error on {path:?}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error(transparent)]
    Sim(#[from] wmfloq::Error),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("checkpoint {path:?}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("oracle deviation {0:e} exceeds tolerance")]
    OracleFailed(f64),
    #[error("stopped after {0} outer sweeps; continue with --resume")]
    Interrupted(usize),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Sim(_) => "simulation",
            CliError::Csv(_) => "csv",
            CliError::Checkpoint { .. } => "checkpoint",
            CliError::OracleFailed(_) => "oracle",
            CliError::Interrupted(_) => "interrupted",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Interrupted(_) => 3,
            _ => 1,
        }
    }

    /// Machine-readable error report.
    pub fn report(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Config { key, .. } = self {
            v["key"] = json!(key);
        }
        v
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), msg: e.to_string() }
}
