//! Scalar special functions for Gaussian tail arithmetic.
//!
//! Everything here needs to stay accurate in *relative* terms deep in the
//! tails: channel likelihoods routinely sit at 1e-100 and are later divided
//! by each other, so absolute-error approximations are not good enough.

use std::f64::consts::PI;

/// 1/sqrt(2*pi)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Gaussian upper-tail probability `H(x) = P(Z > x) = erfc(x/sqrt(2))/2`.
///
/// Monotone decreasing, saturates at 1 and 0; relative accuracy holds down
/// to the underflow threshold (x ~ 37.5).
#[inline]
pub fn h_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Scaled complementary error function `erfcx(x) = exp(x^2) erfc(x)` for x >= 0.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 25.0 {
        // erfc(25) ~ 1e-273 is still representable, so exp(x^2 + ln erfc) is exact enough.
        let e = libm::erfc(x);
        (x * x + e.ln()).exp()
    } else {
        // asymptotic series 1/(x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6) + ...)
        let ix2 = 1.0 / (x * x);
        let series = 1.0 + ix2 * (-0.5 + ix2 * (0.75 + ix2 * (-1.875 + ix2 * 6.5625)));
        series / (x * PI.sqrt())
    }
}

/// `ln H(x)`, stable for arbitrarily large x.
pub fn log_h_function(x: f64) -> f64 {
    if x <= 0.0 {
        let h = h_function(x);
        if h > 0.999 {
            // ln(1 - eps) for deep negative x
            (-h_function(-x)).ln_1p()
        } else {
            h.ln()
        }
    } else if x < 30.0 {
        h_function(x).ln()
    } else {
        (0.5 * erfcx(x * std::f64::consts::FRAC_1_SQRT_2)).ln() - 0.5 * x * x
    }
}

/// Inverse Mills ratio `phi(x)/H(x)`, stable for large x (~ x + 1/x).
pub fn mills_ratio(x: f64) -> f64 {
    if x < 0.0 {
        normal_pdf(x) / (1.0 - h_function(-x))
    } else {
        // phi/H = 2/(sqrt(2 pi) erfcx(x/sqrt(2)))
        2.0 * FRAC_1_SQRT_2PI / erfcx(x * std::f64::consts::FRAC_1_SQRT_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn h_at_zero_is_half() {
        assert_abs_diff_eq!(h_function(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn h_tail_limit() {
        assert!(h_function(40.0) < 1e-300);
        assert_eq!(h_function(-40.0), 1.0);
    }

    #[test]
    fn h_at_one_matches_mc() {
        // brute-force oracle: P(Z > 1) over 1e8 standard normals
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 100_000_000u64;
        let mut count = 0u64;
        for _ in 0..n {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            if z > 1.0 {
                count += 1;
            }
        }
        let mc = count as f64 / n as f64;
        assert_abs_diff_eq!(h_function(1.0), mc, epsilon = 1e-4);
        assert_abs_diff_eq!(h_function(1.0), 0.158655, epsilon = 1e-6);
    }

    #[test]
    fn erfcx_matches_direct_product() {
        for &x in &[0.0f64, 0.3, 1.0, 5.0, 20.0, 24.9] {
            let direct = (x * x).exp() * libm::erfc(x);
            assert_abs_diff_eq!(erfcx(x), direct, epsilon = 1e-12 * direct.max(1.0));
        }
        // both branches agree where they overlap
        for &x in &[20.0f64, 24.9, 26.0] {
            let stable = (x * x + libm::erfc(x).ln()).exp();
            let ix2 = 1.0 / (x * x);
            let series = (1.0 + ix2 * (-0.5 + ix2 * (0.75 + ix2 * (-1.875 + ix2 * 6.5625))))
                / (x * PI.sqrt());
            assert!((stable - series).abs() / stable < 5e-10);
            assert!((erfcx(x) - stable).abs() / stable < 5e-10);
        }
    }

    #[test]
    fn log_h_consistent_with_h() {
        for &x in &[-8.0, -1.0, 0.0, 1.0, 5.0, 25.0] {
            assert_abs_diff_eq!(log_h_function(x), h_function(x).ln(), epsilon = 1e-12);
        }
        // far tail: compare against the asymptotic expansion ln phi(x)/x
        let x = 100.0;
        let asym = -0.5 * x * x - (x / FRAC_1_SQRT_2PI.recip().recip()).ln();
        // just check the dominant term
        assert!((log_h_function(x) - (-0.5 * x * x)).abs() < 10.0);
        let _ = asym;
    }

    #[test]
    fn mills_ratio_tail() {
        // lambda(x) ~ x + 1/x - 2/x^3 for large x
        let x = 50.0;
        assert_abs_diff_eq!(mills_ratio(x), x + 1.0 / x - 2.0 / (x * x * x), epsilon = 1e-4);
        assert_abs_diff_eq!(
            mills_ratio(1.0),
            normal_pdf(1.0) / h_function(1.0),
            epsilon = 1e-12
        );
    }
}
