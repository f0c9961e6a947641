//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("quadrature did not converge: achieved error {achieved:.3e} exceeds budget {requested:.3e}")]
    QuadratureNonConvergent { achieved: f64, requested: f64 },

    /// The conjugate ψ was evaluated outside its effective domain. Carries the
    /// offending argument and, when known, the integration point that produced it.
    #[error("psi evaluated outside its domain at t = {t:.6e}{}", match .y { Some(y) => format!(" (integration point y = {y:.6e})"), None => String::new() })]
    PsiDomain { t: f64, y: Option<f64> },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("ill-conditioned matrix: condition number {cond:.3e} exceeds limit {limit:.3e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("inner solver failed: {0}")]
    InnerSolver(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),
}
