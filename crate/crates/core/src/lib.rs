//! Fast RFI removal for antenna-array covariance matrices.
//!
//! The fast path detects the interferer count with a Lanczos-driven
//! sphericity test and subtracts the Ritz subspace; a full
//! eigendecomposition path (MDL or source-referenced SINR search) is kept
//! as the baseline and quality oracle.

// `!(x > y)` is used on purpose so that NaN falls into the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod bench;
pub mod cli;
pub mod config;
pub mod covio;
pub mod detect;
pub mod error;
pub mod lanczos;
pub mod linalg;
pub mod mitigate;
pub mod skysim;

pub use error::{Error, FormatError, Result};
pub use linalg::{CovarianceMatrix, EigenDecomposition, Tridiagonal, C64};
