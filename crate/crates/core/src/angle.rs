//! Angle arithmetic on the circle. All angles are radians in `[-π, π)`.

use std::f64::consts::PI;

use crate::{Error, Result};

const TAU: f64 = 2.0 * PI;

/// Wraps `theta` into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(theta))
}

/// Signed geodesic difference `a - b` on the circle, in `[-π, π)`.
pub fn angular_diff(a: f64, b: f64) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a - b))
}

/// Infallible variant for callers that already hold finite angles.
#[inline]
pub(crate) fn wrap(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut r = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

#[inline]
pub(crate) fn diff(a: f64, b: f64) -> f64 {
    wrap(a - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI).unwrap(), -PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(TAU + 0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(wrap_angle(PI).unwrap(), -PI);
        assert_eq!(wrap_angle(-PI).unwrap(), -PI);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
        assert!(angular_diff(0.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn diff_examples() {
        assert_abs_diff_eq!(angular_diff(PI - 0.1, -PI + 0.1).unwrap(), -0.2, epsilon = 1e-12);
        assert_eq!(angular_diff(1.234, 1.234).unwrap(), 0.0);
        assert_abs_diff_eq!(angular_diff(0.5, 0.2).unwrap(), 0.3, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn wrap_in_range_and_idempotent(theta in -1e6f64..1e6) {
            let w = wrap_angle(theta).unwrap();
            prop_assert!((-PI..PI).contains(&w));
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
            let k = ((theta - w) / TAU).round();
            prop_assert!((theta - w - k * TAU).abs() < 1e-9 * theta.abs().max(1.0));
        }

        #[test]
        fn diff_is_geodesic(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let d = angular_diff(a, b).unwrap();
            prop_assert!(d.abs() <= PI);
            prop_assert!(angular_diff(b, a).unwrap().abs() - d.abs() < 1e-9 || d == -PI);
        }
    }
}
