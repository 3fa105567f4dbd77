use thiserror::Error;

/// Errors produced anywhere in the estimation and inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter or data outside the model's admissible set.
    #[error("domain error: {0}")]
    Domain(String),

    /// Quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge (achieved error estimate {achieved:e})")]
    Quadrature { achieved: f64 },

    /// A matrix that must be inverted is singular or too ill-conditioned.
    #[error("singular matrix in {context}: condition number {condition:e}")]
    Singular { context: String, condition: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A constrained fit scored below the unconstrained one, so the fit is
    /// only a local optimum; `theta` is the better point.
    #[error("profile score {score} lies below the optimum {optimum} at psi = {psi}")]
    LocalOptimum {
        psi: f64,
        score: f64,
        optimum: f64,
        theta: Vec<f64>,
    },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("simulation study failed: {0}")]
    Study(String),

    /// A named file could not be opened or read.
    #[error("cannot read {path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
