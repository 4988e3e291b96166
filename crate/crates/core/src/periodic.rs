//! Arithmetic on the periodic spatial coordinate.

#[allow(unused_imports)]
use num_traits::Float;


/// Representative of `x` modulo `period` in `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let mut r = x % period;
    if r < 0.0 {
        r += period;
    }
    // adding the period back can round up to `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Minimal-magnitude representative of `a - b` modulo `period`, in `[-period/2, period/2)`.
pub fn circ_diff(a: f64, b: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    wrap(a - b + half, period) - half
}

pub fn circ_dist(a: f64, b: f64, period: f64) -> f64 {
    circ_diff(a, b, period).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(-1.0, 10.0), 9.0);
        assert_eq!(wrap(25.0, 10.0), 5.0);
        assert!(wrap(-1e-18, 10.0) < 10.0);
    }

    #[test]
    fn circular_difference() {
        assert_eq!(circ_diff(1.0, 9.0, 10.0), 2.0);
        assert_eq!(circ_diff(9.0, 1.0, 10.0), -2.0);
        assert_eq!(circ_dist(0.0, 5.0, 10.0), 5.0);
    }
}
