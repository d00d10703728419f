use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh degree {0}: need n >= 2")]
    InvalidDegree(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exponential time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("strong positivity violated: eigenvalue bound {value} at t = {t}")]
    PositivityViolation { value: f64, t: f64 },

    #[error(
        "corner factor I + alpha*sigma_n...sigma_1 is singular (smallest singular value {0:e})"
    )]
    SingularCorner(f64),

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("system with {0} unknowns is too large for the direct solver")]
    TooLarge(usize),

    #[error("fixed-point iteration diverged: {iterations} iterations, contraction estimate {q}")]
    Divergence { iterations: usize, q: f64 },

    #[error("fixed-point iteration stalled after {iterations} iterations (last increment {increment:e})")]
    NotConverged { iterations: usize, increment: f64 },

    #[error("alpha coefficient paths disagree by {0:e}")]
    QuadratureMismatch(f64),

    #[error("oracle resolution insufficient: panel doubling changed the result by {0:e}")]
    OracleResolution(f64),

    #[error("nonlocal problem is singular in mode {mode}: |1 + alpha U| = {value:e}")]
    SingularProblem { mode: usize, value: f64 },
}
