use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("unknown generating-function family `{0}`")]
    UnknownFamily(String),

    #[error("invalid family parameters: {0}")]
    InvalidFamily(String),

    #[error("audit failed: {0}")]
    AuditFailed(String),

    #[error("implicit solve did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("converged to a non-minimum critical point (smallest Hessian eigenvalue {min_eig:.3e})")]
    SaddleDetected { min_eig: f64 },

    #[error("pushed vertical subspace is not a graph over the horizontal at step {n}")]
    NotTransverse { n: usize },

    #[error("graphs live on different grids")]
    GridMismatch,

    #[error("graph failed the Lagrangian audit (asymmetry {asymmetry:.3e})")]
    NotLagrangian { asymmetry: f64 },

    #[error("point is not in the projected Aubry set (indicator {indicator:.3e} > tol {tol:.3e})")]
    NotInAubry { indicator: f64, tol: f64 },

    #[error("ambiguous Aubry partner: two residual minimizers separated by {separation:.3e}")]
    AmbiguousPartner { separation: f64 },

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
