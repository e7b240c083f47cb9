use alloc::string::String;
use core::fmt;

/// Errors produced by the design, estimation and recovery routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Inputs violate a documented precondition (shapes, ranges, weights).
    InvalidInput(String),
    /// A matrix that must be positive definite is (numerically) singular.
    Singular { smallest: f64, largest: f64 },
    /// An iterative routine failed to converge or produced non-finite values.
    Numerical(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Singular { smallest, largest } => write!(
                f,
                "matrix is singular: smallest eigenvalue {smallest:e} vs largest {largest:e}"
            ),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
