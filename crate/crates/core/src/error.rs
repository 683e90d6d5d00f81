use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("selection probability {0} is outside (0, 1]")]
    InvalidProbability(f64),

    #[error("point is infeasible: epsilon(1, x) = {eps_at_one} exceeds target {target}")]
    Infeasible { eps_at_one: f64, target: f64 },

    #[error("profile is not strongly convex at this point (mu = {0})")]
    DegenerateConvexity(f64),

    #[error("upper bracket {bracket} does not enclose the root; the declared strong convexity constant is too large")]
    InvalidBracket { bracket: f64 },

    #[error("solver exceeded {limit} evaluations of the profile")]
    EvaluationBudgetExceeded { limit: usize },

    #[error("non-finite value while {0}")]
    NonFinite(&'static str),

    #[error("{} point(s) failed; first at index {}: {}", .0.len(), .0[0].0, .0[0].1)]
    PointFailures(Vec<(usize, Error)>),

    #[error("data set is not centered: |mean|_1 = {residual} > tolerance {tolerance}")]
    NotCentered { residual: f64, tolerance: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
