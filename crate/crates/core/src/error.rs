use thiserror::Error;

/// Errors raised across the library.
///
/// Variants fall into two families that the command-line front end maps to
/// distinct exit codes: data and contract problems ([`Error::is_numerical`]
/// is `false`) and failures of a numerical routine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("rate function exceeded its bound: rate({t}) = {rate} > {bound}")]
    ContractViolation { t: f64, rate: f64, bound: f64 },

    #[error("degenerate cumulative rate: total mass is {0}")]
    DegenerateRate(f64),

    #[error("cannot impute missing value at index {index}: no observed values within the window")]
    ImputationFailure { index: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("no posterior samples with k = {requested}; available k values: {available:?}")]
    MissingDimension { requested: usize, available: Vec<usize> },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }

    /// True for failures of quadrature, root finding and similar routines.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
