use thiserror::Error;

/// Errors surfaced by the library.
///
/// Divergence of a semi-infinite integral is an error only where the caller
/// asked for a finite value; operations documented to *signal* divergence
/// (moments, tail integrals) return `f64::INFINITY` instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("derivative order {requested} exceeds supported order {supported} for {target}")]
    Capability {
        target: String,
        requested: usize,
        supported: usize,
    },

    #[error("not a measure: {0}")]
    NotAMeasure(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("inadmissible measure: {0}")]
    Inadmissible(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
