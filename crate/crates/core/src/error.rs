use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dominant eigenvalue is not simple (gap {gap:.3e})")]
    DegenerateSpectrum { gap: f64 },

    #[error("unsupported spectrum: {0}")]
    UnsupportedSpectrum(String),

    #[error("CFL condition violated: dt * rate = {ratio:.4} > 1")]
    Cfl { ratio: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("trajectory left the simplex at t = {t:.4} (min coordinate {min_coord:.3e})")]
    LeftSimplex { t: f64, min_coord: f64 },

    #[error("geometric construction failed: {0}")]
    Geometry(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
