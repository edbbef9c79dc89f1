use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unstable system: {0}")]
    Stability(String),

    #[error("ill-conditioned matrix at step {step}: {context}")]
    Conditioning { step: usize, context: String },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("method degeneracy: {0}")]
    Degeneracy(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 numerical, 4 degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Configuration(_)
            | Error::Validation(_)
            | Error::Parse(_)
            | Error::Io { .. }
            | Error::UnsupportedKernel(_)
            | Error::Dimension(_) => 2,
            Error::Degeneracy(_) => 4,
            _ => 3,
        }
    }
}
