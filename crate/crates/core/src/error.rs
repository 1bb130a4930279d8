use thiserror::Error;

/// Errors raised by the laboratory.
///
/// The variants mirror the failure classes the command-line front end maps
/// onto exit codes: configuration problems are user errors, everything else
/// is a runtime failure.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("optimization diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CoreError {
    /// Whether the error stems from user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, CoreError::Config(_) | CoreError::Parse { .. })
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
