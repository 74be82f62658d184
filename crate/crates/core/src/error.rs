use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A file does not follow its binary or text format.
    #[error("format error: {0}")]
    Format(String),
    /// Input data is unusable (non-finite values and the like).
    #[error("data error: {0}")]
    Data(String),
    /// A run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! param_err {
    ($($arg:tt)*) => { $crate::error::Error::Parameter(format!($($arg)*)) };
}
pub(crate) use param_err;
