use thiserror::Error;

/// Errors produced by model construction, certification and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("closed-loop matrix not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },

    #[error("certification error: {0}")]
    Certification(String),

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("simulation diverged at t = {time} (|x| = {norm:e})")]
    Diverged { time: f64, norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
