use thiserror::Error;

/// Errors raised by design construction, loss evaluation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid design space: {0}")]
    InvalidSpace(String),

    #[error("invalid design measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("abscissa {x} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("basis value at x = {x} is not finite")]
    NonFiniteBasisValue { x: f64 },

    #[error("variance function must be strictly positive; got {value} at x = {x}")]
    NonPositiveSigma { x: f64, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{which} is numerically singular (condition number {condition:.3e}); the support is too thin for the basis")]
    Singular { which: &'static str, condition: f64 },

    #[error("moment pencil is degenerate: kappa4*kappa0 - kappa2^2 = {0:.3e}")]
    DegeneratePencil(f64),

    #[error("neither bias branch could be certified at its optimum; fall back to a general minimax search")]
    BranchCheckFailed,

    #[error("optimizer stalled: {0}")]
    OptimizerStalled(String),

    #[error("density family produced a non-density (integral {0:.3e})")]
    NonDensityResult(f64),

    #[error("support of size {k} is smaller than the basis dimension {p}")]
    RankDeficientSupport { k: usize, p: usize },

    #[error("a symmetric support of size {k} needs a centre point, which the space lacks")]
    NoSymmetricSupport { k: usize },

    #[error("design space is not symmetric about zero")]
    AsymmetricSpace,

    #[error("two spline peaks snap to the same design point and no free neighbour remains")]
    DuplicateSnap,

    #[error("regression matrix is rank deficient")]
    RankDeficient,

    #[error("quantile regression objective is unbounded")]
    Unbounded,

    #[error("design space has no room for a misspecification orthogonal to the basis (N = {n}, p = {p})")]
    NoComplement { n: usize, p: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DesignError>;

impl From<std::io::Error> for DesignError {
    fn from(e: std::io::Error) -> Self {
        DesignError::Io(e.to_string())
    }
}

impl From<csv::Error> for DesignError {
    fn from(e: csv::Error) -> Self {
        DesignError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for DesignError {
    fn from(e: serde_json::Error) -> Self {
        DesignError::Parse(e.to_string())
    }
}
