use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    /// `p` has mass where `q` has none (KL is infinite) or a conditional is
    /// undefined where it is needed.
    #[error("support mismatch at {index}: {detail}")]
    SupportMismatch { index: String, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("cannot step from terminal state {0}")]
    TerminalStep(usize),

    #[error("missing reward table")]
    MissingReward,

    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),

    #[error("input signature mismatch: {0}")]
    Signature(String),

    #[error("demonstration/algorithm mismatch: {0}")]
    DemoMismatch(String),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed demonstration file at line {line}: {message}")]
    DemoFormat { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
