use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the depth engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// No pixel of `view` projects into the other view at pyramid level `scale`.
    #[error("views do not overlap (scale {scale}, view {view})")]
    NoOverlap { scale: usize, view: usize },

    #[error("optimization diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("scene configuration: {0}")]
    SceneConfiguration(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Numerical failures (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoOverlap { .. } | Error::Diverged { .. } | Error::DegenerateGeometry(_)
        )
    }
}
