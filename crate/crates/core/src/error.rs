use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Position inside SQL text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("syntax error at {pos}: {msg}")]
    Syntax { msg: String, pos: Pos },

    #[error("planning error: {0}")]
    Plan(String),

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("{operator}: {msg}")]
    Execution { operator: String, msg: String },

    #[error("transducer {name} on segment {segment}: {msg}")]
    Transducer {
        name: String,
        segment: usize,
        msg: String,
    },

    #[error("protocol error at byte {offset}: {msg}")]
    Protocol { offset: u64, msg: String },

    #[error("bsp: {0}")]
    Bsp(String),

    #[error("transfer: {0}")]
    Transfer(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Raised in workers that stop because another worker already failed.
    #[error("query cancelled")]
    Cancelled,

    #[error("upstream worker terminated without end-of-stream")]
    UpstreamAborted,
}

impl Error {
    pub fn execution(operator: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Execution {
            operator: operator.into(),
            msg: msg.into(),
        }
    }

    /// Secondary errors are consequences of another failure and are never
    /// reported when a primary error exists.
    pub fn is_secondary(&self) -> bool {
        matches!(self, Error::Cancelled | Error::UpstreamAborted)
    }
}
