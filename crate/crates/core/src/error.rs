use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver failed to converge on index {index}")]
    NoConvergence { index: usize },

    #[error("starting vector has zero norm")]
    ZeroStartVector,

    #[error("Lanczos iteration cannot continue: {0}")]
    LanczosExhausted(&'static str),

    #[error("eigenvalue {value:e} at index {index} is not positive")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("eigenvalue tail is empty (d_hat = {d_hat}, M = {dim})")]
    EmptyTail { d_hat: usize, dim: usize },

    #[error("negative radicand {radicand:e} in the Ritz-value QMAM (d_hat = {d_hat})")]
    NegativeRadicand { d_hat: usize, radicand: f64 },

    #[error("reference covariance has a non-positive smallest eigenvalue ({0:e})")]
    ZeroMinEigenvalue(f64),

    #[error("no candidate accepted before d_hat reached {limit}")]
    NoAcceptance { limit: usize },

    #[error("basis is not orthonormal: |V^H V - I|_F = {deviation:e}")]
    NonOrthonormalBasis { deviation: f64 },

    #[error("SINR denominator {denominator:e} is degenerate")]
    DegenerateDenominator { denominator: f64 },

    #[error("band mismatch: {expected} Hz vs {got} Hz")]
    BandMismatch { expected: f64, got: f64 },

    #[error("covariance matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    HermitianViolation { asymmetry: f64 },

    #[error("{path}: {kind}")]
    Format { path: PathBuf, kind: FormatError },

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary covariance file decoding failures.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("header truncated")]
    TruncatedHeader,
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("antenna count {0} is below the minimum of 2")]
    TooFewAntennas(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
