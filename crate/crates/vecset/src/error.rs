use crate::encode::Shape;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument failed and no more specific variant applies.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Vector norm is too small to normalize; cosine is undefined for it.
    #[error("degenerate vector: norm {norm:e} is at or below the 1e-12 minimum")]
    DegenerateVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Two long vectors with different shape tags were combined.
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(Shape, Shape),

    #[error("duplicate set id {0}")]
    DuplicateSetId(u64),

    /// The query cardinality was never materialized at build time.
    #[error("unsupported query cardinality {card}; materialized target cardinalities are {available:?}")]
    UnsupportedCardinality { card: usize, available: Vec<usize> },

    #[error("engine is already sealed")]
    AlreadySealed,

    #[error("engine is not sealed yet; seal it before querying")]
    NotSealed,

    /// Malformed file contents (fvecs records, index files, manifests).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
