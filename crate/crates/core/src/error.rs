//! Crate-wide error type.

/// Errors produced by the emulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    /// Simulation produced a non-finite state while generating data.
    #[error("integration blew up at step {step}")]
    Blowup { step: usize },

    /// Emulator hidden state or output became non-finite.
    #[error("divergence in group {group} at step {step}")]
    Divergence { group: usize, step: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A grouped operation received fewer group vectors than the
    /// decomposition defines.
    #[error("incomplete state: {0}")]
    Incomplete(String),

    /// Not enough history to evaluate lagged features.
    #[error("insufficient warmup: {0}")]
    Warmup(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("container version {found} not supported (expected {expected}); upgrade required")]
    Version { found: u32, expected: u32 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
