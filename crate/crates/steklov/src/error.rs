//! Error types shared across the crate.

use thiserror::Error;

/// Invalid argument (out-of-range index, non-unit normal, bad interval, ...).
#[derive(Debug, Clone, Error)]
#[error("invalid argument: {msg}")]
pub struct ArgError {
    pub msg: String,
}

impl ArgError {
    pub fn new(msg: impl Into<String>) -> Self {
        ArgError { msg: msg.into() }
    }
}

/// Evaluation outside a function's domain (kernel at the origin, symbol at
/// a degenerate frequency, ...).
#[derive(Debug, Clone, Error)]
#[error("domain error: {msg}")]
pub struct DomainError {
    pub msg: String,
}

impl DomainError {
    pub fn new(msg: impl Into<String>) -> Self {
        DomainError { msg: msg.into() }
    }
}

/// Failure to load a mesh from a file.
#[derive(Debug, Error)]
pub enum MeshLoadError {
    #[error("io error reading mesh: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Errors raised while assembling or manipulating boundary operators.
#[derive(Debug, Clone, Error)]
pub enum OperatorError {
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("matrix numerically singular (sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e})")]
    Singular { sigma_min: f64, sigma_max: f64 },
    #[error("operation requires {required}, got {got}")]
    Capability { required: String, got: String },
    #[error("meshes incompatible: {0}")]
    MeshMismatch(String),
    #[error("iterative solve stalled: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },
    #[error(transparent)]
    Arg(#[from] ArgError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Errors from the spectral layer (scans, refinement, oracles, resolvents).
#[derive(Debug, Clone, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error(transparent)]
    Arg(#[from] ArgError),
}
