use thiserror::Error;

/// Errors raised by the model, data, and orchestration layers.
#[derive(Debug, Error)]
pub enum BdlError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error for key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<BdlError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BdlError {
    pub fn validation(msg: impl Into<String>) -> Self {
        BdlError::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        BdlError::Numeric(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        BdlError::Dimension(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        BdlError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        BdlError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Wraps the error with a task or phase label.
    pub fn context(self, context: impl Into<String>) -> Self {
        BdlError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &BdlError {
        match self {
            BdlError::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 numeric divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            BdlError::Config { .. } => 2,
            BdlError::Io { .. } => 4,
            BdlError::Parse { .. } => 4,
            BdlError::Numeric(_) | BdlError::Solve(_) => 3,
            BdlError::Validation(_) | BdlError::Dimension(_) | BdlError::Argument(_) => 2,
            BdlError::Context { .. } => unreachable!(),
        }
    }
}

pub type Result<T> = std::result::Result<T, BdlError>;
