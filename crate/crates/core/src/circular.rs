//! Small circular-statistics helpers shared by the analysis stages.

use std::f64::consts::PI;

/// Wraps an angle into `[-pi, pi)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let two_pi = 2.0 * PI;
    let mut y = (x + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can round up to exactly 2*pi.
    if y >= PI {
        y -= two_pi;
    }
    y
}

/// First trigonometric moment `(C, S) / n`.
pub fn first_moment(phases: &[f64]) -> (f64, f64) {
    let n = phases.len() as f64;
    let (c, s) = phases
        .iter()
        .fold((0.0, 0.0), |(c, s), &p| (c + p.cos(), s + p.sin()));
    (c / n, s / n)
}

/// Mean resultant length `R`.
pub fn resultant_length(phases: &[f64]) -> f64 {
    let (c, s) = first_moment(phases);
    c.hypot(s)
}

pub fn circular_mean(phases: &[f64]) -> f64 {
    let (c, s) = first_moment(phases);
    s.atan2(c)
}

/// Circular variance `1 - R`.
pub fn circular_variance(phases: &[f64]) -> f64 {
    1.0 - resultant_length(phases)
}

/// Circular standard deviation `sqrt(-2 ln R)`.
pub fn circular_std(phases: &[f64]) -> f64 {
    let r = resultant_length(phases).max(1e-300);
    (-2.0 * r.ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn wrap_lands_in_half_open_interval(x in -1e4f64..1e4) {
            let y = wrap_angle(x);
            prop_assert!((-PI..PI).contains(&y));
            let k = ((x - y) / (2.0 * PI)).round();
            prop_assert!((x - y - 2.0 * PI * k).abs() < 1e-9);
        }
    }

    #[test]
    fn pi_maps_to_minus_pi() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
    }
}
