use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or unsupported file contents. `offset` is the byte position
    /// at which decoding failed.
    #[error("codec error at byte {offset}: {message}")]
    Codec { offset: u64, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The sample cannot produce a meaningful loss (e.g. zero trimmed variance).
    #[error("loss error: {0}")]
    Loss(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("training error at iteration {iteration}: {message}")]
    Training { iteration: usize, message: String },
}

impl Error {
    pub(crate) fn codec(offset: u64, message: impl Into<String>) -> Self {
        Error::Codec {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

pub(crate) fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, found })
    }
}
