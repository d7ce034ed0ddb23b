use thiserror::Error;

/// Errors raised by model construction, filtering and design routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("quadrature did not converge (last relative change {relative_change:e})")]
    QuadratureNonConvergence { relative_change: f64 },

    #[error("eigendecomposition did not converge")]
    EigenNonConvergence,

    #[error("covariance is not positive semi-definite (smallest eigenvalue {min_eig:e}, largest {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    #[error("pilot matrix is not orthogonal with equal column power (deviation {deviation:e})")]
    NonOrthogonalPilots { deviation: f64 },

    #[error("infeasible request: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
