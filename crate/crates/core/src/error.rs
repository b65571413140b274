use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A configuration value is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A value became NaN or infinite, or left its numeric domain.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An operation was called in the wrong state, e.g. backward before forward.
    #[error("state error: {0}")]
    State(String),

    /// Input data violates a precondition (empty class, non one-hot target, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by user input rather than by a bug or the environment.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::State(_) | Error::Io { .. })
    }
}

/// Reasons a checkpoint file is rejected on load.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic: expected TLDC1")]
    BadMagic,

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("blob length mismatch: manifest describes {expected} bytes, file holds {actual}")]
    BlobLengthMismatch { expected: usize, actual: usize },

    #[error("tensor {name}: manifest shape {found:?} disagrees with model shape {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
}
