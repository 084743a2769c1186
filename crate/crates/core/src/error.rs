use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular offset configuration (det = {det})")]
    SingularConfiguration { det: f64 },

    #[error("degenerate plane: normal is orthogonal to the viewing ray (n.X = {dot})")]
    DegeneratePlane { dot: f64 },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("empty input: no valid samples")]
    EmptyInput,

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("scene error: {0}")]
    Scene(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
