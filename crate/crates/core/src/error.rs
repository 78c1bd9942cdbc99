use thiserror::Error;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input, out-of-range arguments, broken files.
    Validation,
    /// A theorem hypothesis (parameter window, porosity) does not hold.
    Gate,
    /// A computation could not be completed on valid input.
    Numerical,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point budget exceeded: {requested} points requested, budget is {budget}")]
    BudgetExceeded { requested: u128, budget: usize },

    #[error("index {index} out of range for {what} of length {len}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("parameters outside the admissible window: {0}")]
    Inadmissible(String),

    #[error("subset is not porous at the tested scales (no c in {grid:?} passed)")]
    NotPorous { grid: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("vertex {vertex} (level {level}) has an empty ball; the filling is under-resolved")]
    EmptyBall { vertex: usize, level: i32 },

    #[error("covering violated at point {point} on level {level}")]
    CoveringViolation { point: usize, level: i32 },

    #[error(
        "certificate infeasible on pair ({first}, {second}): required constant inflation {inflation}"
    )]
    CertificateInfeasible {
        first: usize,
        second: usize,
        inflation: f64,
    },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_)
            | Error::BudgetExceeded { .. }
            | Error::OutOfRange { .. }
            | Error::Unsupported(_) => ErrorKind::Validation,
            Error::Inadmissible(_) | Error::NotPorous { .. } => ErrorKind::Gate,
            Error::EmptyBall { .. }
            | Error::CoveringViolation { .. }
            | Error::CertificateInfeasible { .. }
            | Error::NoConvergence(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
