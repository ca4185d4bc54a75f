//! k-space MRI reconstruction with subspace score-based diffusion.
//!
//! The reverse process starts in a wavelet subspace of k-space (one
//! orthonormal Haar level), hands off to the full space at a split index,
//! enforces data consistency with the measured samples along the way and
//! finishes with an optional block-Hankel low-rank refinement.
//!
//! Score functions are pluggable: [`score::GaussianPrior`] gives exact
//! scores for verification, [`score::DenoiserModel`] is a small convolutional
//! network trained by denoising score matching.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod kspace;
pub mod numerics;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod wavelet;

pub use num_complex::Complex64;
pub use numerics::{ComplexImage, SeededRng};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("index {index} out of range for {len} steps")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("score singularity: variance + sigma^2 is zero")]
    Singular,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-finite state: {0}")]
    NonFinite(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] numerics::ParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
