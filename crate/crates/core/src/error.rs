use thiserror::Error;

/// Errors produced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported spatial dimension {0} (supported: 1..={max})", max = crate::field::MAX_DIM)]
    UnsupportedDimension(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value {value} at node {index:?} ({point})")]
    NonFinite {
        index: Vec<usize>,
        point: String,
        value: f64,
    },

    #[error("point {0} lies outside the domain")]
    OutOfDomain(String),

    #[error("unknown function family `{0}`")]
    UnknownFamily(String),

    #[error("missing derivative data: {0}")]
    MissingDerivative(String),

    #[error("tau = {tau} is too large for the domain (parabolic margin {margin})")]
    TauTooLarge { tau: f64, margin: f64 },

    #[error("unsupported derivative order: {0}")]
    UnsupportedOrder(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("divergent integral: alpha/2 - beta + 1 = {exponent} <= 0 (alpha = {alpha}, beta = {beta})")]
    Divergent { alpha: u32, beta: u32, exponent: f64 },

    #[error("quadrature did not converge: refinement changed the value by {diff:e} (tolerance {tol:e})")]
    NonConvergent { diff: f64, tol: f64 },

    #[error("matrix is not positive definite: eigenvalue {0}")]
    NotPositiveDefinite(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent measurement: {0}")]
    Inconsistent(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
