use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not fit together.
    #[error("shape error: {0}")]
    Shape(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or insufficient input data.
    #[error("input error: {0}")]
    Input(String),

    /// The epoch does not contain the requested analysis window.
    #[error("epoch [{epoch_start_ms} ms, {epoch_end_ms} ms) does not cover window [{window_start_ms} ms, {window_end_ms} ms)")]
    Coverage {
        epoch_start_ms: f64,
        epoch_end_ms: f64,
        window_start_ms: f64,
        window_end_ms: f64,
    },

    /// Loss became non-finite.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
