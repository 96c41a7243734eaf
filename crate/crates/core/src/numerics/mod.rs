//! Shared deterministic numerical kernels: special functions, quadrature,
//! symmetric-matrix utilities, orthant probabilities and seeded RNG streams.

pub mod matrix;
pub mod orthant;
pub mod quadrature;
pub mod rng;
pub mod special;

pub use matrix::SpdMatrix;
pub use orthant::{mvn_orthant_prob, mvn_truncated_moments, OrthantMoments};
pub use quadrature::{gauss_hermite, QuadratureRule};
pub use rng::{seeded_rng, Stream};
pub use special::{h_function, log_h_function, mills_ratio, normal_pdf};

use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NonPsd { min_eigenvalue: f64 },
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("orthant mass underflows (below 1e-300)")]
    ZeroMass,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
