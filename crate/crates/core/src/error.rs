use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("singular kernel evaluation: source and target coincide")]
    Singularity,
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("particles {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("collision between particles {0} and {1} (gap {2:.3e})")]
    Collision(usize, usize, f64),
    #[error("target outside expansion disk: |x - c| = {dist:.3e} > r = {radius:.3e}")]
    OutOfRange { dist: f64, radius: f64 },
    #[error("GMRES did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("experiment failed: {0}")]
    Experiment(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
