use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("negative standard deviation in layer {layer}")]
    NegativeStd { layer: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("architecture needs at least two layer sizes")]
    EmptyArch,

    #[error("bad dimension: {0}")]
    BadDimension(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("polytope is unbounded along coordinate {coordinate}")]
    UnboundedPolytope { coordinate: usize },

    #[error("sample counts differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("problem too large for exact oracle: {0}")]
    TooLarge(String),

    #[error("performance function is not concave")]
    NotConcave,

    #[error("center point {index} lies outside the support polytope")]
    InfeasibleSupport { index: usize },

    #[error("performance function is neither convex nor concave")]
    UnsupportedStructure,

    #[error("piecewise-affine form not available for this performance function")]
    NotRepresentable,

    #[error("numerical solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
