use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty sentence")]
    EmptySentence,

    #[error("constant input")]
    ConstantInput,

    #[error("constant ranks")]
    ConstantRanks,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or unusable input data.
    #[error("{0}")]
    Data(String),

    /// Invalid experiment or training configuration.
    #[error("{0}")]
    Config(String),

    /// An error annotated with the pipeline stage it came from.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The underlying error with any stage annotations removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the error comes from input data rather than configuration or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(self.root(), Error::Io { .. } | Error::Data(_) | Error::EmptySentence)
    }

    pub fn is_config_error(&self) -> bool {
        matches!(self.root(), Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
