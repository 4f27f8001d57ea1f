use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum SdError {
    #[error("configuration error: {0}")]
    Config(String),

    /// A nonlinearity evaluation left the representable double range. The
    /// simulator treats this as blow-up of the discretization, not physics.
    #[error("nonlinearity saturated at s = {arg:.6e} while {context}")]
    Saturation { arg: f64, context: &'static str },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("damping tail integral diverges; admissibility is violated")]
    TailDivergent,

    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SdError>;
