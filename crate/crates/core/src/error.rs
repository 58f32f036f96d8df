use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Training produced a non-finite loss. The history up to the failure is kept.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Training {
        epoch: usize,
        reason: String,
        history: Vec<f64>,
    },

    #[error("kernel error: {0}")]
    Kernel(String),

    #[error("resonance: {0}")]
    Resonance(String),

    #[error("under-resolved grid: {0}")]
    Resolution(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
