//! Batch front end: scene synthesis, optimization, gradient checking and
//! evaluation with stable exit codes (0 success, 2 invalid input, 3
//! numerical failure).

pub mod commands;
pub mod config;

use std::path::Path;

pub use commands::{cmd_eval, cmd_gradcheck, cmd_gradcheck_with, cmd_optimize, cmd_synth, load_scene, GradientHook};
pub use config::{ExperimentConfig, GradcheckSettings, Precision};

use realdepth_core::GradCheckReport;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] realdepth_core::Error),

    #[error("config parse error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// Entries above threshold; the report lists them.
    #[error("gradient check failed: {} entries above {threshold:e}\n{}", report.offending(*threshold).len(), report.summary(*threshold))]
    GradcheckFailed { report: Box<GradCheckReport>, threshold: f64 },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::GradcheckFailed { .. } => 3,
            _ => 2,
        }
    }
}
