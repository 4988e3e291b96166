//! Sparse relaxed regularized regression of wave positions on a function library.
//!
//! Minimizes
//!
//! ```text
//! 1/2 sum_j || W_j . (x_j - T c_j) ||^2 + lambda R(B) + 1/(2 zeta) || C - B ||^2
//! ```
//!
//! over `C` and `B` with the point-to-wave mask `W` fixed by clustering.
//! Library columns are scaled to unit norm before the solve so that `lambda`
//! acts on comparable coefficients; reported `C`, `B` and `coefficients` are
//! in the original units.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::library::FunctionLibrary;
use crate::tracking::WaveTrack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Regularizer {
    /// `R(B) = sum |b|`; proximal step is soft thresholding at `lambda zeta`.
    #[default]
    L1,
    /// `R(B) = #nonzeros`; proximal step is hard thresholding at `sqrt(2 lambda zeta)`.
    L0,
}

/// How `lambda` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "value", rename_all = "snake_case"))]
pub enum Lambda {
    Absolute(f64),
    /// Fraction of `max |T^T x|` over terms and waves (scaled columns).
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Sr3Options {
    pub lambda: Lambda,
    pub zeta: f64,
    pub regularizer: Regularizer,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for Sr3Options {
    fn default() -> Self {
        Self {
            lambda: Lambda::Relative(0.1),
            zeta: 1.0,
            regularizer: Regularizer::L1,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// Fitted wave-speed models, one column per wave.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedModel {
    pub term_names: Vec<String>,
    /// Relaxed coefficients, `n_terms x n_waves`.
    pub c: DMatrix<f64>,
    /// Sparse auxiliary coefficients, same shape as `c`.
    pub b: DMatrix<f64>,
    /// Least-squares refit restricted to the support of each column of `b`.
    pub coefficients: DMatrix<f64>,
    /// Wave index of every stacked point (the nonzero of each row of `W`).
    pub assignment: Vec<usize>,
    pub lambda: f64,
    pub zeta: f64,
    pub regularizer: Regularizer,
    /// Objective after initialization and after every iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SpeedModel {
    pub fn n_waves(&self) -> usize {
        self.c.ncols()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::NAN)
    }

    /// `W[i, j]`: 1 when point `i` belongs to wave `j`.
    pub fn weight(&self, point: usize, wave: usize) -> f64 {
        if self.assignment[point] == wave {
            1.0
        } else {
            0.0
        }
    }

    /// Indices of nonzero entries of `b` for `wave`.
    pub fn active_terms(&self, wave: usize) -> Vec<usize> {
        (0..self.b.nrows()).filter(|&i| self.b[(i, wave)] != 0.0).collect()
    }

    /// Modeled position of `wave` at time `t`.
    pub fn position(&self, library: &FunctionLibrary, wave: usize, t: f64) -> f64 {
        let coefs: Vec<f64> = self.coefficients.column(wave).iter().copied().collect();
        library.combine(&coefs, t)
    }

    /// Modeled speed of `wave` (central difference of [`position`](Self::position)).
    pub fn speed(&self, library: &FunctionLibrary, wave: usize, t: f64) -> f64 {
        let h = 1e-4 * (1.0 + t.abs());
        (self.position(library, wave, t + h) - self.position(library, wave, t - h)) / (2.0 * h)
    }
}

struct Problem {
    /// Library evaluated at each stacked point, columns scaled to unit norm.
    t_hat: DMatrix<f64>,
    scale: Vec<f64>,
    x: Vec<f64>,
    assignment: Vec<usize>,
    n_waves: usize,
}

impl Problem {
    fn build(tracks: &[WaveTrack], library: &FunctionLibrary, dt: f64) -> Result<Self> {
        let n_terms = library.len();
        if n_terms == 0 {
            return Err(invalid("library", "no terms"));
        }
        for tr in tracks {
            if tr.len() < n_terms {
                return Err(Error::TooFewPoints {
                    needed: n_terms,
                    found: tr.len(),
                });
            }
            if tr.unwrapped_x.len() != tr.len() {
                return Err(invalid("tracks", "unwrapped positions missing"));
            }
        }
        let n: usize = tracks.iter().map(|t| t.len()).sum();
        let mut t_mat = DMatrix::<f64>::zeros(n, n_terms);
        let mut x = Vec::with_capacity(n);
        let mut assignment = Vec::with_capacity(n);
        let mut i = 0;
        for (w, tr) in tracks.iter().enumerate() {
            for (p, &ux) in tr.points.iter().zip(&tr.unwrapped_x) {
                let row = library.eval_row(p.t_index as f64 * dt);
                for (j, v) in row.into_iter().enumerate() {
                    t_mat[(i, j)] = v;
                }
                x.push(ux);
                assignment.push(w);
                i += 1;
            }
        }
        if t_mat.iter().any(|v| !v.is_finite()) {
            return Err(invalid("library", "a term is not finite on the data's time range"));
        }
        let scale: Vec<f64> = (0..n_terms)
            .map(|j| {
                let s = t_mat.column(j).norm();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        for (j, s) in scale.iter().enumerate() {
            t_mat.column_mut(j).scale_mut(1.0 / s);
        }
        Ok(Self {
            t_hat: t_mat,
            scale,
            x,
            assignment,
            n_waves: tracks.len(),
        })
    }

    /// Weighted Gram matrix and right-hand side for one wave.
    fn normal_equations(&self, wave: usize) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.t_hat.ncols();
        let mut g = DMatrix::<f64>::zeros(m, m);
        let mut h = DVector::<f64>::zeros(m);
        for (i, &w) in self.assignment.iter().enumerate() {
            if w != wave {
                continue;
            }
            let row = self.t_hat.row(i);
            for a in 0..m {
                h[a] += row[a] * self.x[i];
                for b in 0..m {
                    g[(a, b)] += row[a] * row[b];
                }
            }
        }
        (g, h)
    }

    fn residual_sq(&self, c_hat: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for (i, &w) in self.assignment.iter().enumerate() {
            let pred = self.t_hat.row(i).dot(&c_hat.column(w).transpose());
            s += (self.x[i] - pred) * (self.x[i] - pred);
        }
        s
    }
}

fn prox(c: f64, lambda: f64, zeta: f64, reg: Regularizer) -> f64 {
    match reg {
        Regularizer::L1 => {
            let thr = lambda * zeta;
            if c > thr {
                c - thr
            } else if c < -thr {
                c + thr
            } else {
                0.0
            }
        }
        Regularizer::L0 => {
            if c * c > 2.0 * lambda * zeta {
                c
            } else {
                0.0
            }
        }
    }
}

fn penalty(b: &DMatrix<f64>, reg: Regularizer) -> f64 {
    match reg {
        Regularizer::L1 => b.iter().map(|v| v.abs()).sum(),
        Regularizer::L0 => b.iter().filter(|v| **v != 0.0).count() as f64,
    }
}

fn objective(p: &Problem, c: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64, zeta: f64, reg: Regularizer) -> f64 {
    0.5 * p.residual_sq(c) + lambda * penalty(b, reg) + (c - b).norm_squared() / (2.0 * zeta)
}

fn solve_spd(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|ch| ch.solve(rhs))
}

/// Fits one sparse model per track by alternating exact minimization over
/// `C` (ridge-coupled weighted least squares) and `B` (proximal step).
///
/// Iteration stops when the objective decrease falls below
/// `tol * (1 + |objective|)` or after `max_iter` sweeps; in the latter case
/// the last iterate is returned with `converged == false`.
pub fn fit_sr3(
    tracks: &[WaveTrack],
    library: &FunctionLibrary,
    dt: f64,
    opts: &Sr3Options,
) -> Result<SpeedModel> {
    if tracks.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, found: 0 });
    }
    if !(opts.zeta > 0.0) {
        return Err(invalid("zeta", "must be > 0"));
    }
    let p = Problem::build(tracks, library, dt)?;
    let m = library.len();
    let nw = p.n_waves;
    let systems: Vec<(DMatrix<f64>, DVector<f64>)> = (0..nw).map(|w| p.normal_equations(w)).collect();

    let lambda = match opts.lambda {
        Lambda::Absolute(v) => v,
        Lambda::Relative(f) => {
            let max = systems
                .iter()
                .flat_map(|(_, h)| h.iter().map(|v| v.abs()))
                .fold(0.0, f64::max);
            f * max
        }
    };
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be finite and >= 0"));
    }
    let ridge = 1.0 / opts.zeta;

    // initial C: plain least squares when well posed, ridge otherwise
    let mut c = DMatrix::<f64>::zeros(m, nw);
    let mut relaxed: Vec<DMatrix<f64>> = Vec::with_capacity(nw);
    for (w, (g, h)) in systems.iter().enumerate() {
        let eig = SymmetricEigen::new(g.clone());
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
        let well_posed = max > 0.0 && min > 1e-12 * max;
        if !well_posed && ridge < 1e-12 * max.max(1.0) {
            let rank = eig.eigenvalues.iter().filter(|v| **v > 1e-12 * max).count();
            return Err(Error::RankDeficient { rank, terms: m });
        }
        let a = g + DMatrix::identity(m, m) * ridge;
        let init = if well_posed { solve_spd(g, h) } else { None }
            .or_else(|| solve_spd(&a, h))
            .ok_or(Error::RankDeficient { rank: 0, terms: m })?;
        c.set_column(w, &init);
        relaxed.push(a);
    }
    let mut b = c.map(|v| prox(v, lambda, opts.zeta, opts.regularizer));
    let mut history = vec![objective(&p, &c, &b, lambda, opts.zeta, opts.regularizer)];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        for (w, (_, h)) in systems.iter().enumerate() {
            let rhs = h + b.column(w) * ridge;
            let col = solve_spd(&relaxed[w], &rhs).ok_or(Error::RankDeficient { rank: 0, terms: m })?;
            c.set_column(w, &col);
        }
        b = c.map(|v| prox(v, lambda, opts.zeta, opts.regularizer));
        let f = objective(&p, &c, &b, lambda, opts.zeta, opts.regularizer);
        let prev = *history.last().unwrap();
        history.push(f);
        if prev - f < opts.tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
    }

    // debiased refit on the support of B
    let mut coefficients = DMatrix::<f64>::zeros(m, nw);
    for (w, (g, h)) in systems.iter().enumerate() {
        let support: Vec<usize> = (0..m).filter(|&i| b[(i, w)] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let gs = DMatrix::from_fn(support.len(), support.len(), |i, j| g[(support[i], support[j])]);
        let hs = DVector::from_fn(support.len(), |i, _| h[support[i]]);
        let sol = solve_spd(&gs, &hs).unwrap_or_else(|| {
            let gr = &gs + DMatrix::identity(support.len(), support.len()) * ridge;
            solve_spd(&gr, &hs).unwrap_or_else(|| DVector::zeros(support.len()))
        });
        for (k, &i) in support.iter().enumerate() {
            coefficients[(i, w)] = sol[k];
        }
    }

    let unscale = |mut mat: DMatrix<f64>| {
        for (j, s) in p.scale.iter().enumerate() {
            mat.row_mut(j).scale_mut(1.0 / s);
        }
        mat
    };
    Ok(SpeedModel {
        term_names: library.names(),
        c: unscale(c),
        b: unscale(b),
        coefficients: unscale(coefficients),
        assignment: p.assignment,
        lambda,
        zeta: opts.zeta,
        regularizer: opts.regularizer,
        objective_history: history,
        iterations,
        converged,
    })
}
