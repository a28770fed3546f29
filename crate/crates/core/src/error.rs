use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not compose.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate fan: fan_in={fan_in}, fan_out={fan_out}")]
    DegenerateFan { fan_in: usize, fan_out: usize },

    /// Invalid model, training or synthesis configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Weight or report file that cannot be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// Non-finite loss or activations during training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
