use std::path::PathBuf;

/// Errors produced by the mesh compiler and simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not unitary: max |U^dag U - I| = {deviation:.3e} exceeds {tolerance:.1e}")]
    NotUnitary { deviation: f64, tolerance: f64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("infeasible settings: {0}")]
    Infeasible(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
