use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for subsystem {site} (local dimension {dim})")]
    IndexOutOfRange { site: usize, index: usize, dim: usize },

    #[error("invalid subsystem index {0}")]
    InvalidSite(usize),

    #[error("partial trace needs at least one kept subsystem")]
    EmptyKeep,

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("layout does not match coupling: {0}")]
    LayoutMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not Hermitian (max |M - M^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error(
        "integrator drift at tau = {tau}: |tr rho - 1| = {trace_error:e}, min eigenvalue = {min_eigenvalue:e}"
    )]
    IntegratorDrift {
        tau: f64,
        trace_error: f64,
        min_eigenvalue: f64,
    },

    #[error("at tau = {tau}: {source}")]
    AtTau {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_tau(self, tau: f64) -> Self {
        match self {
            e @ Error::AtTau { .. } | e @ Error::IntegratorDrift { .. } => e,
            other => Error::AtTau {
                tau,
                source: Box::new(other),
            },
        }
    }

    /// True for errors raised by floating-point tolerance checks rather than
    /// by malformed input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotHermitian { .. }
            | Error::NumericalBreakdown(_)
            | Error::IntegratorDrift { .. } => true,
            Error::InvalidState(_) => true,
            Error::AtTau { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
