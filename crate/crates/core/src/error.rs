use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("edge ({0},{1}) is not part of the graph")]
    UnknownEdge(usize, usize),
    #[error("edge ({0},{1}) carries no response traffic")]
    IdleEdge(usize, usize),
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
