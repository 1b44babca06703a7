use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{stage} training diverged at epoch {epoch}")]
    Diverged { stage: &'static str, epoch: usize },
    #[error("undefined quantity: {0}")]
    Undefined(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Validation(_) | Error::Shape(_))
    }
}

/// Non-fatal conditions surfaced to callers; the std driver logs them.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Standardization saw a (near) constant dimension and maps it to zero.
    DegenerateDimension { dim: usize, variance: f64 },
    /// True-class probabilities below the clamp floor.
    ProbabilityClamped { count: usize },
    /// No pair with differing sensitive labels; the direct bound is zero.
    NoDifferentPairs,
    /// Bottleneck directions with (near) zero activation variance.
    DegenerateCovariance { directions: usize },
}

impl core::fmt::Display for Warning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Warning::DegenerateDimension { dim, variance } => {
                write!(f, "dimension {dim} has variance {variance:e}; mapped to zero")
            }
            Warning::ProbabilityClamped { count } => {
                write!(f, "{count} true-class probabilities clamped to the floor")
            }
            Warning::NoDifferentPairs => write!(f, "no pairs with different sensitive labels"),
            Warning::DegenerateCovariance { directions } => write!(
                f,
                "{directions} bottleneck directions have degenerate activation variance"
            ),
        }
    }
}
