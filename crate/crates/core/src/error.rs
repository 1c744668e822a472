use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: ||M - M^dag||_max = {norm:.3e} exceeds {tol:.1e}")]
    NotHermitian { norm: f64, tol: f64 },

    #[error("matrix is not unitary: ||U^dag U - 1||_max = {norm:.3e} exceeds {tol:.1e}")]
    NotUnitary { norm: f64, tol: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("invalid spin index {index} for a {nspins}-spin system")]
    InvalidIndex { index: usize, nspins: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("trace has imaginary residue {residue:.3e} above tolerance {tol:.1e}")]
    ImaginaryTrace { residue: f64, tol: f64 },

    #[error("unknown species '{0}'")]
    UnknownSpecies(String),

    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("z-commutation validation failed: {0}")]
    ZCommutation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pulse table error: {0}")]
    PulseTable(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
