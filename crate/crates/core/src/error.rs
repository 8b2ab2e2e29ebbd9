use thiserror::Error;

/// Errors raised anywhere in the alignment pipeline.
#[derive(Debug, Error)]
pub enum SpanerError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric error at step {step}: {message}")]
    Numeric { step: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("lineage error: {0}")]
    Lineage(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error class, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl SpanerError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SpanerError::Config(_) | SpanerError::Argument(_) | SpanerError::Index(_) => {
                ErrorKind::Config
            }
            SpanerError::Numeric { .. } => ErrorKind::Numeric,
            SpanerError::Dimension(_)
            | SpanerError::Data(_)
            | SpanerError::Format { .. }
            | SpanerError::Lineage(_)
            | SpanerError::Degenerate(_)
            | SpanerError::Io(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        SpanerError::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T, E = SpanerError> = std::result::Result<T, E>;
