use thiserror::Error;

/// Errors raised by mesh construction, assembly, solving and bound evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EitError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inclusion is empty")]
    EmptyInclusion,

    #[error("element index {index} outside a mesh of {count} elements")]
    ElementOutOfRange { index: usize, count: usize },

    #[error("incompatible Neumann data: boundary integral {integral:e} exceeds tolerance for |phi| = {norm:e}")]
    IncompatibleNeumann { integral: f64, norm: f64 },

    #[error("invalid electrode layout: {0}")]
    InvalidElectrodes(String),

    #[error("matrix not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("solver failure: relative residual {residual:e} above tolerance")]
    SolverFailure { residual: f64 },

    #[error("power mismatch: boundary form {boundary:e} vs energy form {energy:e}")]
    PowerMismatch { boundary: f64, energy: f64 },

    #[error("conductivity regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("sweep aborted: {failed} of {total} solves failed")]
    SweepAborted { failed: usize, total: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, EitError>;
