use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid index {index} out of range for a volume of {len} points")]
    Range { index: usize, len: usize },

    #[error("degenerate rotation: quaternion has zero norm")]
    DegenerateRotation,

    #[error("non-finite attribute on gaussian {index} ({channel})")]
    Render { index: usize, channel: &'static str },

    #[error("render state mismatch: {0}")]
    State(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in channel `{channel}` of gaussian {index}")]
    Optimizer { channel: &'static str, index: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no gaussian passes the opacity floor {floor}")]
    EmptyGeometry { floor: f64 },

    #[error("non-finite loss at iteration {iteration} (active {active}, last finite loss {last_loss})")]
    NonFiniteLoss {
        iteration: usize,
        active: usize,
        last_loss: f64,
    },

    #[error("{path}: {field}: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{path}: bad magic, expected {expected:?}")]
    BadMagic { path: PathBuf, expected: String },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated file ({found} bytes, expected {expected})")]
    Truncated {
        path: PathBuf,
        found: usize,
        expected: usize,
    },

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

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}
