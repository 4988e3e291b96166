//! Direct discrete Fourier transforms for peak picking on short series.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

/// `sum_t x[t] exp(-i w t)`.
pub fn dtft(x: &[f64], w: f64) -> Complex64 {
    // rotation recurrence; renormalized every 64 steps to bound drift
    let step = Complex64::from_polar(1.0, -w);
    let mut z = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (t, v) in x.iter().enumerate() {
        if t % 64 == 0 {
            z = Complex64::from_polar(1.0, -w * t as f64);
        }
        acc += z * *v;
        z *= step;
    }
    acc
}

/// Same as [`dtft`] for a complex series.
pub fn dtft_complex(x: &[Complex64], w: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -w);
    let mut z = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (t, v) in x.iter().enumerate() {
        if t % 64 == 0 {
            z = Complex64::from_polar(1.0, -w * t as f64);
        }
        acc += z * *v;
        z *= step;
    }
    acc
}

/// Peak of `|power(w)|` over the grid `w_j = 2 pi j / (pad n)` restricted to
/// `[lo, hi]` (rad per sample), refined by a parabola through the three
/// samples around the maximum.
pub fn peak_frequency(power: impl Fn(f64) -> f64, n: usize, pad: usize, lo: f64, hi: f64) -> f64 {
    let dw = 2.0 * PI / (pad.max(1) * n.max(1)) as f64;
    let j0 = (lo / dw).ceil() as i64;
    let j1 = (hi / dw).floor() as i64;
    if j1 < j0 {
        return lo;
    }
    let grid: Vec<(f64, f64)> = (j0..=j1).map(|j| (j as f64 * dw, power(j as f64 * dw))).collect();
    let (ibest, _) = grid
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, (_, p))| if *p > acc.1 { (i, *p) } else { acc });
    let w = grid[ibest].0;
    let (pm, p0, pp) = (power(w - dw), grid[ibest].1, power(w + dw));
    let den = pm - 2.0 * p0 + pp;
    if den < 0.0 {
        let delta = 0.5 * (pm - pp) / den;
        (w + delta.clamp(-0.5, 0.5) * dw).clamp(lo, hi)
    } else {
        w
    }
}

/// Dominant angular frequency (rad per sample) of a real series after
/// removing its mean, in `[0, pi]`.
pub fn dominant_frequency(x: &[f64], pad: usize) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    peak_frequency(|w| dtft(&centered, w).norm_sqr(), x.len(), pad, 0.0, PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtft_of_impulse_is_flat() {
        let x = [1.0, 0.0, 0.0];
        assert!((dtft(&x, 1.3) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cosine_peak() {
        let x: Vec<f64> = (0..300).map(|t| (0.37 * t as f64).cos()).collect();
        assert!((dominant_frequency(&x, 8) - 0.37).abs() < 1e-3);
    }
}
