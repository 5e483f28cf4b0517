use std::path::PathBuf;

use nalgebra::DMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which Gram matrix of a two-sided least-squares problem failed to factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramSide {
    /// The spatio-temporal side (ΦᵀΦ or the weighted sum of block Grams).
    Spatial,
    /// The stochastic side (ΨΨᵀ).
    Stochastic,
}

impl std::fmt::Display for GramSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GramSide::Spatial => f.write_str("spatio-temporal Gram (Phi^T Phi)"),
            GramSide::Stochastic => f.write_str("stochastic Gram (Psi Psi^T)"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("rank-deficient {side}: {detail}")]
    RankDeficient { side: GramSide, detail: String },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("Gauss-Newton stagnated: damping exceeded {damping:.1e} without decreasing the loss (best loss {loss:.6e})")]
    Stagnation {
        damping: f64,
        loss: f64,
        /// Lowest-loss coefficients reached.
        best: Box<DMatrix<f64>>,
    },

    #[error("reference solver failed for sample {sample} (xi = {xi:?}): {reason}")]
    Solver {
        sample: usize,
        xi: Vec<f64>,
        reason: String,
    },

    #[error("model file: {0}")]
    Model(#[from] crate::bench::model_io::ModelError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
