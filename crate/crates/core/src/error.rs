use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no supervised nodes")]
    NoSupervisedNodes,

    #[error(
        "non-finite training loss at epoch {epoch} (learning rate {learning_rate}, loss {loss})"
    )]
    Diverged {
        epoch: usize,
        learning_rate: f64,
        loss: f64,
    },

    #[error("{0}")]
    Format(String),

    #[error("run {mode} seed {seed}: {source}")]
    Run {
        mode: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape_pair(op: &str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape(format!(
            "{op}: {}x{} vs {}x{}",
            left.0, left.1, right.0, right.1
        ))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used as the prefix of CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Ingest { .. } | Error::Data(_) => "data",
            Error::Io { .. } => "io",
            Error::NoSupervisedNodes => "data",
            Error::Diverged { .. } => "training",
            Error::Format(_) => "format",
            Error::Run { source, .. } => source.kind(),
        }
    }
}
