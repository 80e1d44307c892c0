use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("unknown system id `{0}`")]
    UnknownSystem(String),

    #[error("unsupported dimension {dim} for {what}")]
    UnsupportedDimension { what: &'static str, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("walker {walker} left the finite range after {steps} steps")]
    NonFiniteWalker { walker: usize, steps: u64 },

    #[error("non-finite loss at epoch {epoch} (last checkpoint: {last_checkpoint:?})")]
    NonFiniteLoss {
        epoch: usize,
        last_checkpoint: Option<usize>,
    },

    #[error("singular pinned system (estimated condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("size limit exceeded: {nodes} nodes > {limit} for dense {what}")]
    SizeLimit {
        what: &'static str,
        nodes: usize,
        limit: usize,
    },

    #[error("no reference potential available for `{0}`")]
    NoReference(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
