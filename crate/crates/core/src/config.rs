//! Tunable tolerances and quadrature resolutions with the documented defaults.

use serde::{Deserialize, Serialize};

/// Resolution and tolerance knobs shared across the library.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    /// Gauss-Hermite nodes per dimension for K <= 2 free-entropy integrals.
    pub gh_nodes: usize,
    /// Gauss-Legendre nodes per panel in layer-adaptive grids.
    pub panel_nodes: usize,
    /// Gauss-Legendre nodes per panel inside the bivariate orthant integral.
    pub bvn_nodes: usize,
    /// Monte Carlo samples for K >= 3 orthant evaluations.
    pub orthant_mc_samples: usize,
    /// Eigenvalue floor applied when repairing nearly-PSD covariances.
    pub eig_clip: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            gh_nodes: 40,
            panel_nodes: 16,
            bvn_nodes: 16,
            orthant_mc_samples: 100_000,
            eig_clip: 1e-12,
        }
    }
}
