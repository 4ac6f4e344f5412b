use thiserror::Error;

/// Errors produced by the channel model, statistics, and run harness.
#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scenario parse error at line {line}: {message}")]
    ScenarioParse { line: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("malformed tensor file: {0}")]
    MalformedTensor(String),

    #[error("memory budget exceeded: {0}")]
    MemoryBudget(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
