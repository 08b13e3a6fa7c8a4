use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The load-side inertia matrix is (numerically) singular.
    #[error("singular inertia matrix: condition number {condition:.3e} exceeds {limit:.1e}")]
    SingularInertia { condition: f64, limit: f64 },

    /// A state or intermediate quantity became NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The Gram matrix could not be factorised even after adding the maximum jitter.
    #[error("Cholesky factorisation failed (max jitter {jitter:.1e} reached)")]
    Factorization { jitter: f64 },

    /// `H P Hᵀ + R` is not positive definite.
    #[error("innovation covariance is not positive definite")]
    InnovationSingular,

    /// Argument outside the admissible domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched vector or matrix dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Scenario or parameter validation failure.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    /// Malformed record file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(v: &nalgebra::DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
