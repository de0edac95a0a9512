use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical routines and controller builders.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Non-finite entries, asymmetric weights, inverted bounds and similar.
    InvalidInput(String),
    /// Operand shapes do not agree.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A simulated output exceeded the blow-up threshold.
    Divergence { step: usize },
    /// The optimization problem has no feasible point.
    Infeasible(String),
    /// A documented precondition (rank, definiteness, assumption) does not hold.
    Precondition(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::Divergence { step } => write!(f, "simulation diverged at step {step}"),
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn ensure_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
