use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation that needs at least one row or column got none.
    EmptyInput,
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    NonFinite,
    InvalidTolerance,
    DegenerateParameters(&'static str),
    /// The constraint matrix has a trivial null space.
    TrivialDataset,
    ErrorWeightTooLarge {
        weight: usize,
        n: usize,
    },
    InstanceTooLarge(&'static str),
    InsufficientSamples {
        expected: usize,
        found: usize,
    },
    LearningFailed {
        found: usize,
        needed: usize,
    },
    NoSparseBasis {
        found: usize,
        needed: usize,
    },
    Singular,
    InvalidColumn {
        column: usize,
        reason: &'static str,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput => f.write_str("empty input"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite => f.write_str("non-finite entry"),
            Error::InvalidTolerance => f.write_str("tolerances must lie in (0, 1)"),
            Error::DegenerateParameters(what) => write!(f, "degenerate parameters: {what}"),
            Error::TrivialDataset => f.write_str("constraint matrix has a trivial null space"),
            Error::ErrorWeightTooLarge { weight, n } => {
                write!(f, "error weight {weight} exceeds length {n}")
            }
            Error::InstanceTooLarge(what) => write!(f, "instance too large for {what}"),
            Error::InsufficientSamples { expected, found } => write!(
                f,
                "insufficient samples: complement has dimension {found}, expected {expected}"
            ),
            Error::LearningFailed { found, needed } => write!(
                f,
                "learning failed: {found} of {needed} independent sparse rows recovered"
            ),
            Error::NoSparseBasis { found, needed } => write!(
                f,
                "no sparse basis: {found} of {needed} independent sparse vectors exist"
            ),
            Error::Singular => f.write_str("matrix is singular"),
            Error::InvalidColumn { column, reason } => write!(f, "column {column}: {reason}"),
        }
    }
}

impl core::error::Error for Error {}
