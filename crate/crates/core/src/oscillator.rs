//! Damped linear oscillator `a exp(g t) cos(f t + phi)` fitted to a wave
//! separation series.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::periodic::circ_diff;
use crate::spectrum::dominant_frequency;
use crate::tracking::WaveTrack;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OscillatorFit {
    pub amplitude: f64,
    /// Per unit time.
    pub growth: f64,
    /// Radians per unit time.
    pub frequency: f64,
    /// Radians in `(-pi, pi]`.
    pub phase: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl OscillatorFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.growth * t).exp() * (self.frequency * t + self.phase).cos()
    }

    pub fn predict(&self, n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| self.eval(i as f64 * dt)).collect()
    }
}

fn model(p: &Vector4<f64>, t: f64) -> (f64, Vector4<f64>) {
    let (a, g, f, ph) = (p[0], p[1], p[2], p[3]);
    let e = (g * t).exp();
    let (s, c) = (f * t + ph).sin_cos();
    let y = a * e * c;
    (y, Vector4::new(e * c, t * y, -a * e * s * t, -a * e * s))
}

fn cost(p: &Vector4<f64>, ts: &[f64], ys: &[f64]) -> f64 {
    ts.iter().zip(ys).map(|(t, y)| (model(p, *t).0 - y).powi(2)).sum()
}

/// Growth rate from a line through `ln|x|` at the local maxima of `|x|`.
fn envelope_growth(ts: &[f64], ys: &[f64]) -> f64 {
    let mut pts = Vec::new();
    for i in 1..ys.len().saturating_sub(1) {
        let (a, b, c) = (ys[i - 1].abs(), ys[i].abs(), ys[i + 1].abs());
        if b > 0.0 && b >= a && b > c {
            pts.push((ts[i], b.ln()));
        }
    }
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<f64>() / sxx
}

fn wrap_phase(ph: f64) -> f64 {
    let mut p = ph % (2.0 * PI);
    if p <= -PI {
        p += 2.0 * PI;
    } else if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Nonlinear least squares (Levenberg-Marquardt) of `a exp(g t) cos(f t + phi)`.
///
/// Frequency starts at the zero-padded spectral peak, growth at the slope of
/// the log envelope, and amplitude/phase at the linear least-squares solution
/// for those two.
pub fn fit_oscillator(x: &[f64], dt: f64) -> Result<OscillatorFit> {
    if x.len() < 8 {
        return Err(Error::TooFewPoints { needed: 8, found: x.len() });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let ts: Vec<f64> = (0..x.len()).map(|i| i as f64 * dt).collect();
    if x.iter().all(|v| *v == 0.0) {
        return Ok(OscillatorFit {
            amplitude: 0.0,
            growth: 0.0,
            frequency: 0.0,
            phase: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let f0 = dominant_frequency(x, 8) / dt;
    let g0 = envelope_growth(&ts, x);
    let mut m = Matrix2::<f64>::zeros();
    let mut r = Vector2::<f64>::zeros();
    for (t, y) in ts.iter().zip(x) {
        let e = (g0 * t).exp();
        let v = Vector2::new(e * (f0 * t).cos(), e * (f0 * t).sin());
        m += v * v.transpose();
        r += v * *y;
    }
    let (pc, qs) = match m.lu().solve(&r) {
        Some(s) => (s[0], s[1]),
        None => (x[0], 0.0),
    };
    // p cos(ft) + q sin(ft) = a cos(ft + phi) with a cos(phi) = p, a sin(phi) = -q
    let mut p = Vector4::new((pc * pc + qs * qs).sqrt(), g0, f0, (-qs).atan2(pc));

    let mut c = cost(&p, &ts, x);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 500 {
        iterations += 1;
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (t, y) in ts.iter().zip(x) {
            let (yh, j) = model(&p, *t);
            jtj += j * j.transpose();
            jtr += j * (yh - y);
        }
        let mut improved = false;
        while mu < 1e16 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                mu *= 10.0;
                continue;
            };
            let trial = p + step;
            let ct = cost(&trial, &ts, x);
            if ct.is_finite() && ct <= c {
                let small = step.iter().zip(p.iter()).all(|(s, v)| s.abs() <= 1e-12 * (v.abs() + 1e-12));
                let flat = c - ct <= 1e-15 * c;
                p = trial;
                c = ct;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if small || flat {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            // no descent direction left: at a stationary point to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let (mut a, g, mut f, mut ph) = (p[0], p[1], p[2], p[3]);
    if a < 0.0 {
        a = -a;
        ph += PI;
    }
    if f < 0.0 {
        f = -f;
        ph = -ph;
    }
    Ok(OscillatorFit {
        amplitude: a,
        growth: g,
        frequency: f,
        phase: wrap_phase(ph),
        residual: (c / x.len() as f64).sqrt(),
        iterations,
        converged,
    })
}

/// Signed separation of wave `b` from wave `a` on their common time rows,
/// minus its mean. Returns `(t_index, separation)` pairs.
pub fn separation_series(a: &WaveTrack, b: &WaveTrack, period: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut times = Vec::new();
    let mut raw = Vec::new();
    let mut j = 0;
    for (i, pa) in a.points.iter().enumerate() {
        while j < b.points.len() && b.points[j].t_index < pa.t_index {
            j += 1;
        }
        if j < b.points.len() && b.points[j].t_index == pa.t_index {
            times.push(pa.t_index);
            raw.push(b.unwrapped_x[j] - a.unwrapped_x[i]);
        }
    }
    if raw.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: raw.len() });
    }
    // start on the short arc, then follow the unwrapped difference
    let shift = circ_diff(raw[0], 0.0, period) - raw[0];
    let mean = raw.iter().sum::<f64>() / raw.len() as f64 + shift;
    Ok((times, raw.iter().map(|d| d + shift - mean).collect()))
}

/// Central differences (one-sided at the ends).
pub fn central_difference(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return alloc::vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (x[1] - x[0]) / dt
            } else if i == n - 1 {
                (x[n - 1] - x[n - 2]) / dt
            } else {
                (x[i + 1] - x[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_cosine_has_no_growth() {
        let x: Vec<f64> = (0..400).map(|t| 2.0 * (0.2 * t as f64 + 0.4).cos()).collect();
        let fit = fit_oscillator(&x, 1.0).unwrap();
        assert!(fit.growth.abs() <= 1e-6);
        assert!((fit.frequency - 0.2).abs() < 1e-9);
        assert!((fit.amplitude - 2.0).abs() < 1e-8);
        assert!((fit.phase - 0.4).abs() < 1e-8);
    }

    #[test]
    fn short_series_rejected() {
        assert_eq!(
            fit_oscillator(&[1.0; 7], 1.0).unwrap_err(),
            Error::TooFewPoints { needed: 8, found: 7 }
        );
    }

    #[test]
    fn velocity_of_line() {
        let v = central_difference(&[0.0, 2.0, 4.0, 6.0], 2.0);
        assert_eq!(v, alloc::vec![1.0; 4]);
    }
}
