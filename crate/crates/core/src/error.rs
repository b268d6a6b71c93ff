use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NonHermitian(f64),

    #[error("invalid rate {0}: rates must be finite and non-negative")]
    InvalidRate(f64),

    #[error("invalid evolution time {0}")]
    InvalidTime(f64),

    #[error("matrix exponential overflow (scaled norm {0:.3e})")]
    ExpOverflow(f64),

    #[error("eigensolver failed to converge")]
    EigenSolver,

    #[error("no dissipative gap")]
    NoGap,

    #[error("degenerate steady space ({0} zero modes)")]
    DegenerateSteadyState(usize),

    #[error("singular linear system")]
    Singular,

    #[error("parameter {index} = {value} outside domain ({lower}, {upper})")]
    OutOfDomain {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("non-identifiable at theta = {0:?}")]
    NonIdentifiable(Vec<f64>),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
