use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vectors belong to different spaces ({left:#x} vs {right:#x})")]
    SpaceMismatch { left: u64, right: u64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("box projection is not available for a gram inner product")]
    UnsupportedProjection,
    #[error("incompatible structure: {0}")]
    IncompatibleStructure(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NonSpd(String),
    #[error("step rho={rho} outside contraction window (0, {upper})")]
    NonContraction { rho: f64, upper: f64 },
    #[error("iteration limit of {max_iter} reached (last step {last_step:e})")]
    MaxIterExceeded {
        max_iter: usize,
        last_step: f64,
        best: Vec<f64>,
    },
    #[error("penalty operator kernel does not match the constraint set: {0}")]
    KernelMismatch(String),
    #[error("friction smallness condition violated: {lhs:e} >= {rhs:e}")]
    SmallnessViolated { lhs: f64, rhs: f64 },
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("empty Dirichlet boundary: at least one node must be clamped")]
    EmptyGamma1,
    #[error("boundary node {0} carries no boundary tag")]
    UntaggedBoundary(usize),
    #[error("io: {0}")]
    Io(String),
    #[error("json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
