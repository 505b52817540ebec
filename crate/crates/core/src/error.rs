//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A cylinder or ball is deeper than the arithmetic / construction allows.
    #[error("depth exceeded: {0}")]
    DepthExceeded(String),

    /// A schedule regime is too short to move the zero-fraction into the
    /// target band.
    #[error("infeasible drift: {0}")]
    InfeasibleDrift(String),

    /// No child selection meets the separation constraints.
    #[error("separation unsatisfiable: {0}")]
    SeparationUnsatisfiable(String),

    /// A target set was empty where a nonempty one is required.
    #[error("empty target set: {0}")]
    EmptyTarget(String),

    /// An exhaustive search or enumeration exceeded its budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// A slope fit had no usable data (all sums zero / too few depths).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// A bisection could not establish a bracket on the search interval.
    #[error("search interval exhausted: {0}")]
    SearchIntervalExhausted(String),

    /// Configuration or parameter validation failed.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
