use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("operator is not Hermitian: max |A - A^dagger| = {0:e}")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix exponential overflow: 1-norm {norm:e} exceeds the limit {limit:e}")]
    Overflow { norm: f64, limit: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("map is not hermiticity-preserving: Choi asymmetry {0:e}")]
    NotHermiticityPreserving(f64),
    #[error("map is not completely positive: Choi eigenvalue {0:e}")]
    NotCompletelyPositive(f64),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("correlation function is not integrable: {0}")]
    NonIntegrable(String),
    #[error("fourth-order term {0} is not registered")]
    UnregisteredTerm(String),
    #[error("system Hamiltonian spectrum is degenerate (smallest level gap {gap:e})")]
    DegenerateSpectrum { gap: f64 },
    #[error("integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("total Hilbert-space dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("finite bath fit residual {residual:.4} exceeds tolerance {tolerance:.4}")]
    FitFailure { residual: f64, tolerance: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("table parse error: {0}")]
    Table(String),
}

pub type Result<T> = std::result::Result<T, Error>;
