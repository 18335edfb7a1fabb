//! Standard normal distribution and density.

use crate::error::{GdaError, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// N(z), accurate in both tails. Accepts infinities.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// N'(z).
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Checked form of [`norm_cdf`] that rejects non-finite input.
pub fn std_normal_cdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(GdaError::domain(format!("normal cdf at non-finite point {z}")));
    }
    Ok(norm_cdf(z))
}

/// Checked form of [`norm_pdf`] that rejects non-finite input.
pub fn std_normal_pdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(GdaError::domain(format!("normal pdf at non-finite point {z}")));
    }
    Ok(norm_pdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // 40-digit reference computed offline.
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_pdf(0.0) - INV_SQRT_2PI).abs() < 1e-17);
    }

    #[test]
    fn deep_lower_tail_keeps_relative_accuracy() {
        // N(-10) = 7.619853024160526e-24
        let n = norm_cdf(-10.0);
        assert!((n / 7.619_853_024_160_526e-24 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn symmetry() {
        for &z in &[0.1, 0.7, 2.5, 6.0] {
            assert!((norm_cdf(z) + norm_cdf(-z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn checked_versions_reject_nan() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_pdf(f64::INFINITY).is_err());
        assert!(std_normal_cdf(1.0).is_ok());
    }
}
