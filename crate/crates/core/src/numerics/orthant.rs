//! Multivariate-normal orthant probabilities and orthant-truncated moments.
//!
//! K = 1 and K = 2 are handled analytically: the orthant mass reduces to a
//! smooth 1D integral (or the arcsin quadrant identity at zero mean) and the
//! first/second truncated moments follow from integration by parts, so the
//! results stay relatively accurate even for masses near 1e-300. K >= 3 falls
//! back to seeded Monte Carlo.

use super::matrix::SpdMatrix;
use super::quadrature::{gauss_legendre, legendre_panel};
use super::special::{h_function, normal_pdf};
use super::NumericsError;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mass under the orthant and conditioned first/second moments of (z - mean).
#[derive(Clone, Debug)]
pub struct OrthantMoments {
    pub mass: f64,
    pub first: DVector<f64>,
    pub second: DMatrix<f64>,
}

/// Unnormalized standardized moments over {x1 > h1, x2 > h2}, corr `rho`.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct BvnRaw {
    pub mass: f64,
    pub m1: [f64; 2],
    /// [e11, e12, e22]
    pub m2: [f64; 3],
}

const RHO_DEGENERATE: f64 = 1.0 - 1e-10;
/// Below this mass an outcome is treated as impossible.
pub const MASS_FLOOR: f64 = 1e-300;

/// P(X1 > h1, X2 > h2) for standard bivariate normals with correlation rho.
pub(crate) fn bvn_upper_mass(h1: f64, h2: f64, rho: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    if rho >= RHO_DEGENERATE {
        return h_function(h1.max(h2));
    }
    if rho <= -RHO_DEGENERATE {
        return (h_function(h1) - h_function(-h2)).max(0.0);
    }
    if h1 == 0.0 && h2 == 0.0 {
        // exact quadrant identity: 1/4 + asin(rho)/(2 pi)
        return 0.25 + rho.asin() / std::f64::consts::TAU;
    }
    // integrate over the coordinate with the larger threshold
    let (ha, hb) = if h1 >= h2 { (h1, h2) } else { (h2, h1) };
    if ha > 37.0 {
        return 0.0; // below f64 underflow for the Gaussian tail
    }
    let r = (1.0 - rho * rho).sqrt();
    let a = ha.max(-8.5);
    let b = (ha.max(0.0).powi(2) + 72.0).sqrt();
    let mut total = 0.0;
    let edges = [a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b];
    for seg in edges.windows(2) {
        total += legendre_panel(seg[0], seg[1], gl)
            .map(|(t, w)| w * normal_pdf(t) * h_function((hb - rho * t) / r))
            .sum::<f64>();
    }
    total.max(0.0)
}

/// Mass plus unnormalized first and (optionally) second standardized moments.
/// First/second moments are exact given the mass (integration by parts).
pub(crate) fn bvn_upper_raw(
    h1: f64,
    h2: f64,
    rho: f64,
    need_second: bool,
    gl: &(Vec<f64>, Vec<f64>),
) -> BvnRaw {
    if rho >= RHO_DEGENERATE {
        let hm = h1.max(h2);
        let mass = h_function(hm);
        let p = normal_pdf(hm);
        let e = mass + hm * p;
        return BvnRaw { mass, m1: [p, p], m2: [e, e, e] };
    }
    if rho <= -RHO_DEGENERATE {
        // X2 = -X1, region h1 < X1 < -h2
        if -h2 <= h1 {
            return BvnRaw::default();
        }
        let mass = h_function(h1) - h_function(-h2);
        let m1 = normal_pdf(h1) - normal_pdf(h2);
        let e = (h_function(h1) + h1 * normal_pdf(h1)) - (h_function(-h2) - h2 * normal_pdf(h2));
        return BvnRaw { mass: mass.max(0.0), m1: [m1, -m1], m2: [e, -e, e] };
    }
    let mass = bvn_upper_mass(h1, h2, rho, gl);
    let r = (1.0 - rho * rho).sqrt();
    let b1 = (h2 - rho * h1) / r;
    let b2 = (h1 - rho * h2) / r;
    let t1 = normal_pdf(h1) * h_function(b1);
    let t2 = normal_pdf(h2) * h_function(b2);
    let m1 = [t1 + rho * t2, rho * t1 + t2];
    let mut m2 = [0.0; 3];
    if need_second {
        let s1 = normal_pdf(h1) * (rho * h1 * h_function(b1) + r * normal_pdf(b1));
        let s2 = normal_pdf(h2) * (rho * h2 * h_function(b2) + r * normal_pdf(b2));
        let e11 = mass + h1 * t1 + rho * s2;
        let e22 = mass + h2 * t2 + rho * s1;
        // two algebraically equal routes; average for exact symmetry
        let e12 = 0.5 * (rho * e11 + r * r * s2) + 0.5 * (rho * e22 + r * r * s1);
        m2 = [e11, e12, e22];
    }
    BvnRaw { mass, m1, m2 }
}

/// Standardization of (mean, cov, signs): thresholds for the flipped frame in
/// which the orthant is the positive quadrant.
pub(crate) struct Standardized2 {
    pub sd: [f64; 2],
    pub rho: f64,
}

impl Standardized2 {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self, NumericsError> {
        let v11 = cov[(0, 0)];
        let v22 = cov[(1, 1)];
        if v11 <= 0.0 || v22 <= 0.0 {
            return Err(NumericsError::SingularCovariance);
        }
        let sd = [v11.sqrt(), v22.sqrt()];
        let rho = (cov[(0, 1)] / (sd[0] * sd[1])).clamp(-1.0, 1.0);
        Ok(Self { sd, rho })
    }

    /// Raw moments of (z - mean) over the orthant {signs_i * z_i > 0}.
    pub fn orthant_raw(
        &self,
        mean: &[f64],
        signs: [i8; 2],
        need_second: bool,
        gl: &(Vec<f64>, Vec<f64>),
    ) -> BvnRaw {
        let s0 = signs[0] as f64;
        let s1 = signs[1] as f64;
        let h1 = -s0 * mean[0] / self.sd[0];
        let h2 = -s1 * mean[1] / self.sd[1];
        let raw = bvn_upper_raw(h1, h2, s0 * s1 * self.rho, need_second, gl);
        // map back to original coordinates: z_i - mean_i = signs_i sd_i x_i
        let a = s0 * self.sd[0];
        let b = s1 * self.sd[1];
        BvnRaw {
            mass: raw.mass,
            m1: [a * raw.m1[0], b * raw.m1[1]],
            m2: [a * a * raw.m2[0], a * b * raw.m2[1], b * b * raw.m2[2]],
        }
    }
}

fn check_inputs(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    signs: &[i8],
) -> Result<usize, NumericsError> {
    let k = mean.len();
    if cov.dim() != k || signs.len() != k {
        return Err(NumericsError::InvalidArgument(
            "mean, cov and signs must share the dimension K".into(),
        ));
    }
    if cov.min_eigenvalue() <= 0.0 {
        return Err(NumericsError::SingularCovariance);
    }
    Ok(k)
}

/// Probability that N(mean, cov) lands in the orthant {signs_i * z_i > 0}.
///
/// K <= 2 is analytic; larger K uses `mc_samples` seeded Monte Carlo draws.
pub fn mvn_orthant_prob(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    signs: &[i8],
    mc_samples: usize,
    seed: u64,
) -> Result<f64, NumericsError> {
    let k = check_inputs(mean, cov, signs)?;
    match k {
        1 => Ok(h_function(-(signs[0] as f64) * mean[0] / cov.as_matrix()[(0, 0)].sqrt())),
        2 => {
            let std2 = Standardized2::new(cov.as_matrix())?;
            let gl = gauss_legendre(16);
            Ok(std2
                .orthant_raw(mean.as_slice(), [signs[0], signs[1]], false, &gl)
                .mass)
        }
        _ => Ok(mvn_orthant_mc(mean, cov, signs, mc_samples, seed)?.0),
    }
}

/// Orthant mass together with the conditioned first/second moments of (z - mean).
pub fn mvn_truncated_moments(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    signs: &[i8],
    mc_samples: usize,
    seed: u64,
) -> Result<OrthantMoments, NumericsError> {
    let k = check_inputs(mean, cov, signs)?;
    let (mass, first_raw, second_raw) = match k {
        1 => {
            let sd = cov.as_matrix()[(0, 0)].sqrt();
            let s = signs[0] as f64;
            let h = -s * mean[0] / sd;
            let mass = h_function(h);
            let m1 = s * sd * normal_pdf(h);
            let e = sd * sd * (mass + h * normal_pdf(h));
            (
                mass,
                DVector::from_vec(vec![m1]),
                DMatrix::from_element(1, 1, e),
            )
        }
        2 => {
            let std2 = Standardized2::new(cov.as_matrix())?;
            let gl = gauss_legendre(16);
            let raw = std2.orthant_raw(mean.as_slice(), [signs[0], signs[1]], true, &gl);
            (
                raw.mass,
                DVector::from_vec(vec![raw.m1[0], raw.m1[1]]),
                DMatrix::from_row_slice(2, 2, &[raw.m2[0], raw.m2[1], raw.m2[1], raw.m2[2]]),
            )
        }
        _ => {
            let (mass, m1, m2) = mvn_orthant_mc(mean, cov, signs, mc_samples, seed)?;
            (mass, m1, m2)
        }
    };
    if mass < MASS_FLOOR {
        return Err(NumericsError::ZeroMass);
    }
    Ok(OrthantMoments {
        mass,
        first: first_raw / mass,
        second: second_raw / mass,
    })
}

/// Seeded MC estimate of (mass, unnormalized first moment, unnormalized second
/// moment of (z-mean)) for K >= 3.
fn mvn_orthant_mc(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    signs: &[i8],
    mc_samples: usize,
    seed: u64,
) -> Result<(f64, DVector<f64>, DMatrix<f64>), NumericsError> {
    let k = mean.len();
    let chol = cov
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(NumericsError::SingularCovariance)?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut m1 = DVector::zeros(k);
    let mut m2 = DMatrix::zeros(k, k);
    let mut u = DVector::zeros(k);
    for _ in 0..mc_samples {
        for ui in u.iter_mut() {
            *ui = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let d = &l * &u; // z - mean
        let inside = (0..k).all(|i| (signs[i] as f64) * (d[i] + mean[i]) > 0.0);
        if inside {
            hits += 1;
            m1 += &d;
            m2 += &d * d.transpose();
        }
    }
    let n = mc_samples as f64;
    Ok((hits as f64 / n, m1 / n, m2 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity2() -> SpdMatrix {
        SpdMatrix::identity(2)
    }

    #[test]
    fn independent_quadrant() {
        let p = mvn_orthant_prob(&DVector::zeros(2), &identity2(), &[1, 1], 0, 0).unwrap();
        assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn correlated_quadrant_matches_arcsin_and_mc() {
        let cov =
            SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let p = mvn_orthant_prob(&DVector::zeros(2), &cov, &[1, 1], 0, 0).unwrap();
        let exact = 0.25 + (0.5f64).asin() / (2.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(p, exact, epsilon = 1e-12);

        // MC oracle, 1e8 samples, tolerance 1e-4
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000_000u64;
        let mut hits = 0u64;
        let c = (1.0f64 - 0.25).sqrt();
        for _ in 0..n {
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = 0.5 * z1 + c * rng.sample::<f64, _>(rand_distr::StandardNormal);
            if z1 > 0.0 && z2 > 0.0 {
                hits += 1;
            }
        }
        assert_abs_diff_eq!(p, hits as f64 / n as f64, epsilon = 1e-4);
    }

    #[test]
    fn far_mean_saturates() {
        let mean = DVector::from_vec(vec![10.0, 10.0]);
        let p = mvn_orthant_prob(&mean, &identity2(), &[1, 1], 0, 0).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn truncated_first_moment_half_normal() {
        // E[z | z in (+,+)] per coordinate for independent normals = sqrt(2/pi)
        let m = mvn_truncated_moments(&DVector::zeros(2), &identity2(), &[1, 1], 0, 0).unwrap();
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(m.first[0], expect, epsilon = 1e-10);
        assert_abs_diff_eq!(m.first[1], expect, epsilon = 1e-10);

        let neg = mvn_truncated_moments(&DVector::zeros(2), &identity2(), &[-1, -1], 0, 0).unwrap();
        assert_abs_diff_eq!(neg.first[0], -expect, epsilon = 1e-10);
        assert_abs_diff_eq!(neg.first[1], -expect, epsilon = 1e-10);
    }

    #[test]
    fn truncated_first_moment_conditioned_mc() {
        // MC over conditioned samples, 1e7 draws, tolerance 1e-3
        let cov =
            SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 1.0])).unwrap();
        let mean = DVector::from_vec(vec![0.4, -0.2]);
        let m = mvn_truncated_moments(&mean, &cov, &[1, -1], 0, 0).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = (1.0f64 - 0.09).sqrt();
        let (mut n_in, mut s1, mut s2, mut s11, mut s12, mut s22) = (0u64, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..10_000_000u64 {
            let u1: f64 = rng.sample(rand_distr::StandardNormal);
            let u2: f64 = rng.sample(rand_distr::StandardNormal);
            let z1 = mean[0] + u1;
            let z2 = mean[1] + (-0.3 * u1 + c * u2);
            if z1 > 0.0 && z2 < 0.0 {
                n_in += 1;
                s1 += z1 - mean[0];
                s2 += z2 - mean[1];
                s11 += (z1 - mean[0]) * (z1 - mean[0]);
                s12 += (z1 - mean[0]) * (z2 - mean[1]);
                s22 += (z2 - mean[1]) * (z2 - mean[1]);
            }
        }
        let nf = n_in as f64;
        assert_abs_diff_eq!(m.first[0], s1 / nf, epsilon = 1e-3);
        assert_abs_diff_eq!(m.first[1], s2 / nf, epsilon = 1e-3);
        assert_abs_diff_eq!(m.second[(0, 0)], s11 / nf, epsilon = 2e-3);
        assert_abs_diff_eq!(m.second[(0, 1)], s12 / nf, epsilon = 2e-3);
        assert_abs_diff_eq!(m.second[(1, 1)], s22 / nf, epsilon = 2e-3);
    }

    #[test]
    fn untruncated_limit() {
        let mean = DVector::from_vec(vec![10.0, 10.0]);
        let m = mvn_truncated_moments(&mean, &identity2(), &[1, 1], 0, 0).unwrap();
        assert_abs_diff_eq!(m.first[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.first[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn masses_sum_to_one_and_means_cancel() {
        // law of total expectation: sum over orthants of mass * first = 0
        let cov =
            SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.8])).unwrap();
        let mean = DVector::from_vec(vec![0.3, -0.7]);
        let mut total_mass = 0.0;
        let mut total_first = DVector::zeros(2);
        for signs in [[1, 1], [1, -1], [-1, 1], [-1, -1]] {
            let m = mvn_truncated_moments(&mean, &cov, &signs, 0, 0).unwrap();
            total_mass += m.mass;
            total_first += m.mass * m.first;
        }
        assert_abs_diff_eq!(total_mass, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(total_first[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(total_first[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn analytic_matches_seeded_mc_on_random_cases() {
        // spec invariant: analytic K=2 orthant prob vs seeded MC within 4 MC sigma
        let mut outer = ChaCha8Rng::seed_from_u64(11);
        for case in 0..5u64 {
            let r: f64 = outer.gen_range(-0.9..0.9);
            let mean = DVector::from_vec(vec![outer.gen_range(-1.5..1.5), outer.gen_range(-1.5..1.5)]);
            let cov = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0])).unwrap();
            let signs = [if case % 2 == 0 { 1 } else { -1 }, 1];
            let p = mvn_orthant_prob(&mean, &cov, &signs, 0, 0).unwrap();

            let n = 10_000_000u64;
            let mut hits = 0u64;
            let c = (1.0 - r * r).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
            for _ in 0..n {
                let u1: f64 = rng.sample(rand_distr::StandardNormal);
                let u2: f64 = rng.sample(rand_distr::StandardNormal);
                let z1 = mean[0] + u1;
                let z2 = mean[1] + r * u1 + c * u2;
                if (signs[0] as f64) * z1 > 0.0 && (signs[1] as f64) * z2 > 0.0 {
                    hits += 1;
                }
            }
            let mc = hits as f64 / n as f64;
            let sigma = (mc * (1.0 - mc) / n as f64).sqrt().max(1e-9);
            assert!(
                (p - mc).abs() < 4.0 * sigma,
                "case {case}: p={p} mc={mc} sigma={sigma}"
            );
        }
    }

    #[test]
    fn k3_mc_path_runs() {
        let cov = SpdMatrix::identity(3);
        let p = mvn_orthant_prob(&DVector::zeros(3), &cov, &[1, 1, 1], 200_000, 5).unwrap();
        assert_abs_diff_eq!(p, 0.125, epsilon = 3e-3);
        // determinism
        let p2 = mvn_orthant_prob(&DVector::zeros(3), &cov, &[1, 1, 1], 200_000, 5).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn singular_covariance_rejected() {
        let cov = SpdMatrix::new_unchecked(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(
            mvn_orthant_prob(&DVector::zeros(2), &cov, &[1, 1], 0, 0),
            Err(NumericsError::SingularCovariance)
        ));
    }

    #[test]
    fn zero_mass_is_an_error() {
        let mean = DVector::from_vec(vec![45.0, 45.0]);
        assert!(matches!(
            mvn_truncated_moments(&mean, &identity2(), &[-1, -1], 0, 0),
            Err(NumericsError::ZeroMass)
        ));
    }
}
