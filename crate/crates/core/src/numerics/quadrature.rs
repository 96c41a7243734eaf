//! Deterministic quadrature rules: Gauss-Hermite against the standard normal
//! measure, Gauss-Legendre panels, and layer-adaptive Gaussian grids used by
//! the free-entropy and state-evolution integrals.

use super::NumericsError;
use nalgebra::DMatrix;

/// Nodes and weights integrating against the standard normal measure N(0,1).
///
/// Weights are normalized to sum to one and nodes are symmetric about zero.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` against N(0,1).
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Golub-Welsch eigenvalue construction shared by the Gauss rules:
/// nodes are eigenvalues of the symmetric tridiagonal Jacobi matrix,
/// weights come from the first eigenvector components.
fn golub_welsch(offdiag: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = offdiag.len() + 1;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in offdiag.iter().enumerate() {
        jac[(k, k + 1)] = b;
        jac[(k + 1, k)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            (eig.eigenvalues[j], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

/// Gauss-Hermite rule for the Gaussian measure: exact for polynomials of
/// degree <= 2n-1 under N(0,1).
pub fn gauss_hermite(n_nodes: usize) -> Result<QuadratureRule, NumericsError> {
    if !(2..=200).contains(&n_nodes) {
        return Err(NumericsError::InvalidArgument(format!(
            "gauss_hermite: n_nodes must be in [2, 200], got {n_nodes}"
        )));
    }
    // probabilists' Hermite recurrence: beta_k = sqrt(k)
    let offdiag: Vec<f64> = (1..n_nodes).map(|k| (k as f64).sqrt()).collect();
    let (mut nodes, mut weights) = golub_welsch(&offdiag);
    // enforce exact symmetry about 0 and unit mass
    let n = n_nodes;
    for i in 0..n / 2 {
        let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[n - 1 - i] = a;
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Gauss-Legendre nodes/weights on [-1, 1].
pub fn gauss_legendre(n_nodes: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n_nodes >= 1);
    if n_nodes == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let offdiag: Vec<f64> = (1..n_nodes)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (nodes, mut weights) = golub_welsch(&offdiag);
    for w in &mut weights {
        *w *= 2.0; // total mass of [-1,1]
    }
    (nodes, weights)
}

/// A panel [a, b] mapped Gauss-Legendre rule, `weights` include the Jacobian.
pub fn legendre_panel(a: f64, b: f64, base: &(Vec<f64>, Vec<f64>)) -> impl Iterator<Item = (f64, f64)> + '_ {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    base.0
        .iter()
        .zip(&base.1)
        .map(move |(&x, &w)| (mid + half * x, half * w))
}

/// One-dimensional layer-adaptive grid against N(mu, sigma^2).
///
/// Plain Gauss-Hermite under-resolves integrands that are smooth except for
/// sigmoidal layers much narrower than sigma (this is exactly what happens to
/// the channel integrals when rho - q degenerates). The grid splits
/// [mu - 8 sigma, mu + 8 sigma] at each layer center c and at c +- 10 w
/// (w = layer width), then applies Gauss-Legendre on every segment with the
/// Gaussian density folded into the weights.
pub fn layered_normal_grid(
    mu: f64,
    sigma: f64,
    layers: &[(f64, f64)],
    base: &(Vec<f64>, Vec<f64>),
) -> Vec<(f64, f64)> {
    let lo = mu - 8.0 * sigma;
    let hi = mu + 8.0 * sigma;
    let mut edges = vec![lo, hi];
    for &(c, w) in layers {
        for e in [c - 10.0 * w, c - 2.0 * w, c, c + 2.0 * w, c + 10.0 * w] {
            if e > lo && e < hi {
                edges.push(e);
            }
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-300);
    let inv_sigma = 1.0 / sigma;
    let mut out = Vec::with_capacity((edges.len() + 4) * base.0.len());
    // panels wider than ~4 sigma under-resolve the Gaussian weight itself
    let max_width = 4.0 * sigma;
    for seg in edges.windows(2) {
        let parts = ((seg[1] - seg[0]) / max_width).ceil().max(1.0) as usize;
        let step = (seg[1] - seg[0]) / parts as f64;
        for p in 0..parts {
            let a = seg[0] + p as f64 * step;
            for (t, w) in legendre_panel(a, a + step, base) {
                let z = (t - mu) * inv_sigma;
                out.push((t, w * super::special::normal_pdf(z) * inv_sigma));
            }
        }
    }
    out
}

/// Tensor grid for `E_{x ~ N(mu, cov)}[f(x)]` in two dimensions, built from
/// the conditional decomposition x2 | x1 and per-dimension layer hints.
pub fn layered_normal_grid_2d(
    mu: [f64; 2],
    cov: &DMatrix<f64>,
    layers: [&[(f64, f64)]; 2],
    base: &(Vec<f64>, Vec<f64>),
) -> Vec<([f64; 2], f64)> {
    debug_assert_eq!(cov.nrows(), 2);
    let s1 = cov[(0, 0)].max(1e-300).sqrt();
    let slope = cov[(0, 1)] / cov[(0, 0)].max(1e-300);
    let tau = (cov[(1, 1)] - cov[(0, 1)] * cov[(0, 1)] / cov[(0, 0)].max(1e-300))
        .max(1e-300)
        .sqrt();
    let outer = layered_normal_grid(mu[0], s1, layers[0], base);
    let mut out = Vec::with_capacity(outer.len() * outer.len());
    for &(t, wt) in &outer {
        let m2 = mu[1] + slope * (t - mu[0]);
        for (u, wu) in layered_normal_grid(m2, tau, layers[1], base) {
            out.push(([t, u], wt * wu));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::h_function;
    use approx::assert_abs_diff_eq;

    #[test]
    fn second_moment_exact_with_two_nodes() {
        let rule = gauss_hermite(2).unwrap();
        assert_abs_diff_eq!(rule.integrate(|x| x * x), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fourth_moment_n20() {
        let rule = gauss_hermite(20).unwrap();
        assert_abs_diff_eq!(rule.integrate(|x| x.powi(4)), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_tail_average_n50() {
        // E[H(X)] = P(Z > X) = 1/2 by symmetry of Z - X
        let rule = gauss_hermite(50).unwrap();
        assert_abs_diff_eq!(rule.integrate(h_function), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn moments_up_to_degree_2n_minus_1() {
        // odd moments vanish, even moments are (2k-1)!!
        let rule = gauss_hermite(12).unwrap();
        let mut dfact = 1.0;
        for k in 1..=11usize {
            let m = rule.integrate(|x| x.powi(k as i32));
            if k % 2 == 1 {
                assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
            } else {
                dfact *= (k - 1) as f64;
                assert_abs_diff_eq!(m, dfact, epsilon = 1e-11 * dfact);
            }
        }
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(gauss_hermite(1).is_err());
        assert!(gauss_hermite(201).is_err());
    }

    #[test]
    fn weights_normalized_nodes_symmetric() {
        for n in [2usize, 7, 40, 101] {
            let rule = gauss_hermite(n).unwrap();
            let s: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
            for i in 0..n {
                assert_abs_diff_eq!(rule.nodes[i], -rule.nodes[n - 1 - i], epsilon = 0.0);
            }
        }
    }

    #[test]
    fn legendre_integrates_cubics() {
        let gl = gauss_legendre(2);
        let val: f64 = legendre_panel(0.0, 2.0, &gl).map(|(t, w)| w * t * t * t).sum();
        assert_abs_diff_eq!(val, 4.0, epsilon = 1e-13);
    }

    #[test]
    fn layered_grid_resolves_narrow_sigmoid() {
        // E[H(x/w)] under N(mu, 1) with w << 1 approaches P(X < 0) = H(mu)
        let gl = gauss_legendre(16);
        let w = 1e-4;
        for mu in [-0.7, 0.0, 1.3] {
            let grid = layered_normal_grid(mu, 1.0, &[(0.0, w)], &gl);
            let val: f64 = grid.iter().map(|&(t, wt)| wt * h_function(t / w)).sum();
            assert_abs_diff_eq!(val, h_function(mu), epsilon = 1e-9);
        }
    }

    #[test]
    fn layered_grid_total_mass() {
        let gl = gauss_legendre(16);
        let grid = layered_normal_grid(0.3, 2.0, &[(0.0, 0.01)], &gl);
        let mass: f64 = grid.iter().map(|&(_, w)| w).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn layered_grid_2d_moments() {
        let gl = gauss_legendre(16);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.7]);
        let grid = layered_normal_grid_2d([0.2, -0.1], &cov, [&[(0.0, 0.05)], &[(0.0, 0.05)]], &gl);
        let mass: f64 = grid.iter().map(|&(_, w)| w).sum();
        let e1: f64 = grid.iter().map(|&(x, w)| w * x[0]).sum();
        let e12: f64 = grid.iter().map(|&(x, w)| w * (x[0] - 0.2) * (x[1] + 0.1)).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e1, 0.2, epsilon = 1e-9);
        assert_abs_diff_eq!(e12, 0.4, epsilon = 1e-9);
    }
}
