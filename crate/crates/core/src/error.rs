use std::fmt;
use std::path::PathBuf;

/// A named hypothesis of the weighted action functional that a configuration failed.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    /// Acceleration coefficient α must be strictly positive.
    AlphaPositive,
    /// Velocity coefficient β must be strictly positive.
    BetaPositive,
    /// Confinement coefficient κ must be strictly positive.
    KappaPositive,
    /// The potential must carry a finite declared lower bound.
    BoundedBelow,
    /// Time-varying potentials must vanish identically at zero input.
    ZeroAtNullInput,
    /// The weight must satisfy 0 < C₁ ≤ ϖ(t) ≤ C₂ < ∞ on the horizon.
    WeightBounds(String),
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::AlphaPositive => write!(f, "alpha > 0 (α > 0) is required"),
            Hypothesis::BetaPositive => write!(f, "beta > 0 (β > 0) is required"),
            Hypothesis::KappaPositive => write!(f, "kappa > 0 (κ > 0) is required"),
            Hypothesis::BoundedBelow => write!(f, "potential must be bounded from below"),
            Hypothesis::ZeroAtNullInput => {
                write!(f, "time-varying potential must satisfy U(q, 0) = 0")
            }
            Hypothesis::WeightBounds(detail) => {
                write!(
                    f,
                    "weight must satisfy 0 < C1 <= w(t) <= C2 < inf: {detail}"
                )
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite {what} at {location}")]
    NumericDomain { what: String, location: String },

    #[error("value {value} below declared lower bound {bound}")]
    LowerBoundViolated { value: f64, bound: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(Hypothesis),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("I/O error at {path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV {path}: {message}", path = .path.display())]
    Csv { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn non_finite(what: impl Into<String>, location: impl Into<String>) -> Self {
        Error::NumericDomain {
            what: what.into(),
            location: location.into(),
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
