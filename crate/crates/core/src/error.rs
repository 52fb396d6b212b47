use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while dispatching operations or running scheduled work.
///
/// Futures remember their failure and hand out clones on every read, so the
/// type is `Clone` and keeps only owned strings.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unhandled operation `{op}` (stack: {stack})")]
    UnhandledOperation { op: String, stack: String },

    #[error("handler scope `{frame}` released out of order (top of stack is `{top}`)")]
    OutOfOrderPop { frame: String, top: String },

    #[error("bad argument for `{op}`: {msg}")]
    BadArgument { op: String, msg: String },

    #[error("scheduler closed: the async handler scope has already exited")]
    SchedulerClosed,

    #[error("scheduler stalled: {0}")]
    Stalled(String),

    #[error("backend error{}: {body}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Backend { status: Option<u16>, body: String },

    #[error("request timed out after {0} ms")]
    Timeout(u64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no mock rule matches prompt {prompt:?}")]
    MockRuleMissing { prompt: String },

    #[error("replay trace exhausted after {consumed} records")]
    ReplayExhausted { consumed: usize },

    #[error("replay mismatch at seq {seq}: recorded {expected:?}, got {found:?}")]
    ReplayMismatch {
        seq: u64,
        expected: String,
        found: String,
    },

    #[error("output does not match schema `{schema}`: {msg}")]
    SchemaValidation { schema: String, msg: String },

    #[error("validation failed: {0}")]
    ValidationFailed(String),

    #[error("malformed trace at line {line}: {msg}")]
    TraceFormat { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{0}")]
    Task(String),
}

impl Error {
    pub fn bad_arg(op: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::BadArgument {
            op: op.into(),
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
