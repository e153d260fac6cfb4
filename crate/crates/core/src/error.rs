use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation requires a non-empty dictionary")]
    EmptyDictionary,

    #[error("rank-1 update denominator {denominator:.3e} below floor {floor:.3e}")]
    SingularUpdate { denominator: f64, floor: f64 },

    #[error("bordered growth pivot {delta:.3e} below floor {floor:.3e}")]
    SingularGrowth { delta: f64, floor: f64 },

    #[error("oracle system is singular")]
    OracleSingular,

    #[error("unsupported environment: {0}")]
    UnsupportedEnv(String),

    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    InvalidConfig { line: Option<usize>, message: String },

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig { line: None, message: message.into() }
    }

    pub fn config_at(line: usize, message: impl Into<String>) -> Self {
        Error::InvalidConfig { line: Some(line), message: message.into() }
    }
}
