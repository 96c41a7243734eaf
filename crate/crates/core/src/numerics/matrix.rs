//! Small symmetric positive semi-definite matrices (the K x K order
//! parameters q, q-hat, rho, and the per-factor covariances).

use super::NumericsError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Symmetric PSD matrix with validated invariants.
///
/// Symmetry is enforced within 1e-12 relative tolerance at construction and
/// eigenvalues may not drop below -1e-10; use [`SpdMatrix::clip`] to project
/// nearly-PSD matrices back onto the cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix(DMatrix<f64>);

const SYM_RTOL: f64 = 1e-12;
const EIG_FLOOR: f64 = -1e-10;

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, NumericsError> {
        if !m.is_square() {
            return Err(NumericsError::InvalidArgument(
                "SpdMatrix requires a square matrix".into(),
            ));
        }
        let scale = m.amax().max(1.0);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > SYM_RTOL * scale {
                    return Err(NumericsError::NotSymmetric {
                        asymmetry: (m[(i, j)] - m[(j, i)]).abs() / scale,
                    });
                }
            }
        }
        let min = min_symmetric_eigenvalue(&m);
        if min < EIG_FLOOR * scale {
            return Err(NumericsError::NonPsd { min_eigenvalue: min });
        }
        Ok(Self(symmetrize(&m)))
    }

    /// Construct without validation; caller guarantees symmetry and PSD-ness.
    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        Self(symmetrize(&m))
    }

    pub fn identity(k: usize) -> Self {
        Self(DMatrix::identity(k, k))
    }

    pub fn zeros(k: usize) -> Self {
        Self(DMatrix::zeros(k, k))
    }

    pub fn scaled_identity(k: usize, s: f64) -> Self {
        Self(DMatrix::identity(k, k) * s)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_symmetric_eigenvalue(&self.0)
    }

    /// Symmetric square root: S with S S = M (relative Frobenius error <= 1e-10).
    pub fn sqrt(&self) -> Result<SpdMatrix, NumericsError> {
        let eig = self.0.clone().symmetric_eigen();
        let mut vals = eig.eigenvalues;
        let scale = vals.amax().max(1.0);
        for v in vals.iter_mut() {
            if *v < -1e-8 * scale {
                return Err(NumericsError::NonPsd { min_eigenvalue: *v });
            }
            *v = v.max(0.0).sqrt();
        }
        Ok(Self::new_unchecked(rebuild(&eig.eigenvectors, &vals)))
    }

    /// Project onto eigenvalues >= floor.
    pub fn clip(&self, floor: f64) -> SpdMatrix {
        let eig = self.0.clone().symmetric_eigen();
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        Self::new_unchecked(rebuild(&eig.eigenvectors, &vals))
    }

    pub fn try_inverse(&self) -> Result<SpdMatrix, NumericsError> {
        self.0
            .clone()
            .try_inverse()
            .map(Self::new_unchecked)
            .ok_or(NumericsError::SingularMatrix)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

impl From<SpdMatrix> for DMatrix<f64> {
    fn from(m: SpdMatrix) -> Self {
        m.0
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

fn rebuild(vectors: &DMatrix<f64>, vals: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= vals[j];
    }
    scaled * vectors.transpose()
}

/// Clip the eigenvalues of a symmetric matrix given as a raw `DMatrix`.
pub(crate) fn clip_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    rebuild(&eig.eigenvectors, &vals)
}

/// Symmetric square root of a raw symmetric PSD matrix (negative eigenvalues
/// are truncated at zero).
pub(crate) fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    rebuild(&eig.eigenvectors, &vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sqrt_of_identity() {
        let s = SpdMatrix::identity(3).sqrt().unwrap();
        assert_abs_diff_eq!(s.as_matrix(), &DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let m = SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        let s = m.sqrt().unwrap();
        assert_abs_diff_eq!(s.as_matrix()[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.as_matrix()[(1, 1)], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.as_matrix()[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(
            SpdMatrix::new(m),
            Err(NumericsError::NotSymmetric { .. })
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(NumericsError::NonPsd { .. })));
    }

    fn random_spd(seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(2, 2) * 0.1
    }

    proptest! {
        #[test]
        fn sqrt_squares_back(seed in 0u64..500) {
            let m = random_spd(seed);
            let s = SpdMatrix::new(m.clone()).unwrap().sqrt().unwrap();
            let back = s.as_matrix() * s.as_matrix();
            let err = (&back - &m).norm() / m.norm();
            prop_assert!(err < 1e-10, "relative error {err}");
        }

        #[test]
        fn sqrt_commutes_with_rotation(seed in 0u64..100, theta in 0.0..std::f64::consts::PI) {
            let m = random_spd(seed);
            let r = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
            let rotated = &r * &m * r.transpose();
            let s1 = SpdMatrix::new(rotated.clone()).unwrap().sqrt().unwrap();
            let s0 = SpdMatrix::new(m).unwrap().sqrt().unwrap();
            let s0_rot = &r * s0.as_matrix() * r.transpose();
            let err = (s1.as_matrix() - &s0_rot).norm() / s0_rot.norm();
            prop_assert!(err < 1e-9, "relative error {err}");
        }
    }
}
