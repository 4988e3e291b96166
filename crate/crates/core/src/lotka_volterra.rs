//! Lotka-Volterra interaction model for two competing waves.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LvParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl LvParams {
    pub fn new(alpha: f64, beta: f64, delta: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            delta,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `(gamma / delta, alpha / beta)`.
    pub fn fixed_point(&self) -> (f64, f64) {
        (self.gamma / self.delta, self.alpha / self.beta)
    }

    #[inline]
    fn rhs(&self, y: f64, z: f64) -> (f64, f64) {
        (self.alpha * y - self.beta * y * z, self.delta * y * z - self.gamma * z)
    }

    #[inline]
    fn rk4(&self, y: f64, z: f64, h: f64) -> (f64, f64) {
        let (k1y, k1z) = self.rhs(y, z);
        let (k2y, k2z) = self.rhs(y + 0.5 * h * k1y, z + 0.5 * h * k1z);
        let (k3y, k3z) = self.rhs(y + 0.5 * h * k2y, z + 0.5 * h * k2z);
        let (k4y, k4z) = self.rhs(y + h * k3y, z + h * k3z);
        (
            y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
            z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LvTrajectory {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl LvTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

const BLOWUP: f64 = 1e150;

/// Classical RK4 with fixed step `h`; returns `n_steps + 1` samples
/// starting at `(y0, z0)`.
pub fn lv_simulate(params: &LvParams, y0: f64, z0: f64, n_steps: usize, h: f64) -> Result<LvTrajectory> {
    params.validate()?;
    if !(y0 >= 0.0 && z0 >= 0.0 && y0.is_finite() && z0.is_finite()) {
        return Err(invalid("initial condition", "y0 and z0 must be finite and >= 0"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("h", "must be > 0"));
    }
    let mut t = Vec::with_capacity(n_steps + 1);
    let mut ys = Vec::with_capacity(n_steps + 1);
    let mut zs = Vec::with_capacity(n_steps + 1);
    let (mut y, mut z) = (y0, z0);
    t.push(0.0);
    ys.push(y);
    zs.push(z);
    for step in 1..=n_steps {
        (y, z) = params.rk4(y, z, h);
        if !(y.abs() < BLOWUP && z.abs() < BLOWUP) {
            return Err(Error::Overflow { step });
        }
        t.push(step as f64 * h);
        ys.push(y);
        zs.push(z);
    }
    Ok(LvTrajectory { t, y: ys, z: zs })
}

/// First integral `delta y - gamma ln y + beta z - alpha ln z` per sample.
pub fn lv_conserved(params: &LvParams, traj: &LvTrajectory) -> Result<Vec<f64>> {
    traj.y
        .iter()
        .zip(&traj.z)
        .enumerate()
        .map(|(i, (&y, &z))| {
            if !(y > 0.0 && z > 0.0) {
                return Err(invalid("trajectory", format!("sample {i} is not strictly positive")));
            }
            Ok(params.delta * y - params.gamma * y.ln() + params.beta * z - params.alpha * z.ln())
        })
        .collect()
}

/// Evenly spaced values `start, start + step, ..., <= stop`, snapped to
/// twelve decimals so that e.g. the seventh value of a 0.01 grid is 0.07.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GridAxis {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl Default for GridAxis {
    fn default() -> Self {
        Self {
            start: 0.01,
            stop: 0.30,
            step: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ParamGrid {
    pub alpha: GridAxis,
    pub beta: GridAxis,
    pub delta: GridAxis,
    pub gamma: GridAxis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LvFit {
    pub params: LvParams,
    /// Frobenius norm of the training residual.
    pub train_error: f64,
    pub candidates: usize,
    pub failed: usize,
}

/// Squared residual of one candidate, or `None` once it exceeds `bound` or blows up.
fn candidate_error(p: &LvParams, y: &[f64], z: &[f64], h: f64, bound: f64) -> Option<f64> {
    let (mut yy, mut zz) = (y[0], z[0]);
    let mut acc = 0.0;
    for i in 1..y.len() {
        (yy, zz) = p.rk4(yy, zz, h);
        if !(yy.abs() < BLOWUP && zz.abs() < BLOWUP) {
            return None;
        }
        acc += (yy - y[i]).powi(2) + (zz - z[i]).powi(2);
        if acc > bound {
            return Some(acc);
        }
    }
    Some(acc)
}

/// Exhaustive grid search. Every candidate is simulated from `(y[0], z[0])`
/// with step `h` and scored by the Frobenius norm of the residual over the
/// first `train_len` samples. Ties go to the lexicographically smallest
/// `(alpha, beta, delta, gamma)`.
pub fn lv_fit_sweep(y: &[f64], z: &[f64], train_len: usize, grid: &ParamGrid, h: f64) -> Result<LvFit> {
    if y.len() != z.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} samples", y.len()),
            found: format!("{} samples", z.len()),
        });
    }
    if train_len < 2 || train_len > y.len() {
        return Err(invalid("train_len", format!("must be in 2..={}, got {train_len}", y.len())));
    }
    if !(h > 0.0) {
        return Err(invalid("h", "must be > 0"));
    }
    if let Some(i) = y[..train_len].iter().chain(&z[..train_len]).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i % train_len, col: i / train_len });
    }
    let axes = [grid.alpha.values(), grid.beta.values(), grid.delta.values(), grid.gamma.values()];
    for (axis, name) in axes.iter().zip(["alpha", "beta", "delta", "gamma"]) {
        if axis.is_empty() {
            return Err(Error::EmptyGrid(name));
        }
        if axis.iter().any(|v| *v <= 0.0) {
            return Err(invalid(name, "grid values must be > 0"));
        }
    }
    let (ys, zs) = (&y[..train_len], &z[..train_len]);
    let mut best: Option<(LvParams, f64)> = None;
    let mut candidates = 0;
    let mut failed = 0;
    for &alpha in &axes[0] {
        for &beta in &axes[1] {
            for &delta in &axes[2] {
                for &gamma in &axes[3] {
                    candidates += 1;
                    let p = LvParams {
                        alpha,
                        beta,
                        delta,
                        gamma,
                    };
                    let bound = best.map_or(f64::INFINITY, |b| b.1);
                    match candidate_error(&p, ys, zs, h, bound) {
                        None => failed += 1,
                        Some(e) if e < bound => best = Some((p, e)),
                        Some(_) => {}
                    }
                }
            }
        }
    }
    let (params, err) = best.ok_or(Error::AllCandidatesFailed)?;
    Ok(LvFit {
        params,
        train_error: err.sqrt(),
        candidates,
        failed,
    })
}

/// Affine map of a series onto `[floor, floor + 1]`, optionally negated first.
/// Returns the mapped series and `(sign, shift, scale)` with
/// `mapped = (sign * x - shift) / scale + floor`.
pub fn to_positive(x: &[f64], negate: bool, floor: f64) -> Result<(Vec<f64>, (f64, f64, f64))> {
    let sign = if negate { -1.0 } else { 1.0 };
    let lo = x.iter().map(|v| sign * v).fold(f64::INFINITY, f64::min);
    let hi = x.iter().map(|v| sign * v).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("series is constant"));
    }
    let scale = hi - lo;
    Ok((x.iter().map(|v| (sign * v - lo) / scale + floor).collect(), (sign, lo, scale)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_params() -> LvParams {
        LvParams::new(0.07, 0.13, 0.10, 0.05).unwrap()
    }

    #[test]
    fn decoupled_growth_and_decay() {
        let p = reference_params();
        let tr = lv_simulate(&p, 1.5, 0.0, 1000, 0.01).unwrap();
        for (t, y) in tr.t.iter().zip(&tr.y) {
            let e = 1.5 * (p.alpha * t).exp();
            assert!((y - e).abs() <= 1e-8 * e);
        }
        let tr = lv_simulate(&p, 0.0, 2.0, 1000, 0.01).unwrap();
        for (t, z) in tr.t.iter().zip(&tr.z) {
            let e = 2.0 * (-p.gamma * t).exp();
            assert!((z - e).abs() <= 1e-8 * e);
        }
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = reference_params();
        let (y0, z0) = p.fixed_point();
        let tr = lv_simulate(&p, y0, z0, 500, 1.0).unwrap();
        assert!(tr.y.iter().all(|y| (y - y0).abs() < 1e-10));
        assert!(tr.z.iter().all(|z| (z - z0).abs() < 1e-10));
        let v = lv_conserved(&p, &tr).unwrap();
        assert!(v.iter().all(|x| *x == v[0]));
    }

    #[test]
    fn overflow_names_step() {
        let p = LvParams::new(5.0, 1e-9, 1e-9, 1e-9).unwrap();
        assert!(matches!(lv_simulate(&p, 1.0, 1.0, 10_000, 1.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn default_axis_hits_two_decimals() {
        let v = GridAxis::default().values();
        assert_eq!(v.len(), 30);
        assert_eq!(v[6], 0.07);
        assert_eq!(v[12], 0.13);
        assert_eq!(v[29], 0.30);
    }

    #[test]
    fn single_candidate_grid() {
        let p = reference_params();
        let tr = lv_simulate(&p, 1.0, 0.3, 50, 1.0).unwrap();
        let one = |v: f64| GridAxis {
            start: v,
            stop: v,
            step: 0.01,
        };
        let grid = ParamGrid {
            alpha: one(0.2),
            beta: one(0.1),
            delta: one(0.1),
            gamma: one(0.1),
        };
        let fit = lv_fit_sweep(&tr.y, &tr.z, 50, &grid, 1.0).unwrap();
        assert_eq!(fit.params, LvParams::new(0.2, 0.1, 0.1, 0.1).unwrap());
        assert_eq!(fit.candidates, 1);
    }
}
