use thiserror::Error;

#[derive(Debug, Error)]
pub enum MrfError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("enumeration cap exceeded: {states} configurations > cap {cap}")]
    CapExceeded { states: u128, cap: u128 },
    #[error("graph carries no grid metadata")]
    NotAGrid,
    #[error("grid column height {rows} exceeds transfer-matrix cap {cap}")]
    ColumnCapExceeded { rows: usize, cap: usize },
    #[error("invalid edge weights: {0}")]
    InvalidEdgeWeights(String),
    #[error("message passing produced NaN at iteration {0}")]
    NanInMessages(usize),
    #[error("inner inference did not converge (final delta {0:.3e})")]
    InnerNotConverged(f64),
    #[error("empirical moment cell {0} is zero; apply smoothing before estimation")]
    ZeroMomentCell(String),
    #[error("line search failed at iteration {0}")]
    LineSearchFailed(usize),
    #[error("matrix is numerically singular (condition number > {0:.1e})")]
    SingularMatrix(f64),
    #[error("empty sample list")]
    EmptyInput,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MrfError>;
