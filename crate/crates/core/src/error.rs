use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("degenerate Orlicz function: G({t}) = 0 for t > 0")]
    Degenerate { t: f64 },

    #[error("bracketing failed on [{lo:e}, {hi:e}]: {what}")]
    Bracket { lo: f64, hi: f64, what: String },

    #[error("integrability error: {0}")]
    Integrability(String),

    #[error("resolution error: mollifier radius {eps} below 2h = {min}")]
    Resolution { eps: f64, min: f64 },

    #[error("stencil error: {0}")]
    Stencil(String),

    #[error("singular quotient: x = y")]
    Singularity,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition violated: {what} (measured distance {distance:e})")]
    Precondition { what: String, distance: f64 },

    #[error("line search failed after {iterations} iterations (energy {energy:e})")]
    LineSearch { iterations: usize, energy: f64 },

    #[error("internal consistency error: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
