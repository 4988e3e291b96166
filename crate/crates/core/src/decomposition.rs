//! Proper orthogonal decomposition and robust PCA of space-time fields.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::field::SpatiotemporalField;

/// Truncated SVD of the `n_space x n_time` snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalDecomposition {
    /// Orthonormal spatial modes, `n_space x r`.
    pub modes: DMatrix<f64>,
    /// Leading singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// `diag(s) V^T`, `r x n_time`.
    pub time_coeffs: DMatrix<f64>,
    /// Squared Frobenius norm of the decomposed data.
    pub total_energy: f64,
}

impl ModalDecomposition {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `s_i^2 / ||X||_F^2`.
    pub fn energy_fraction(&self, i: usize) -> f64 {
        if self.total_energy == 0.0 {
            return 0.0;
        }
        self.singular_values[i] * self.singular_values[i] / self.total_energy
    }

    pub fn reconstruct(&self, dt: f64) -> Result<SpatiotemporalField> {
        SpatiotemporalField::from_snapshots(&(&self.modes * &self.time_coeffs), dt)
    }
}

/// Thin SVD with singular values sorted descending and each left vector
/// signed so that its largest-magnitude entry is positive.
pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut us = DMatrix::<f64>::zeros(u.nrows(), order.len());
    let mut vts = DMatrix::<f64>::zeros(order.len(), vt.ncols());
    let mut s = Vec::with_capacity(order.len());
    for (c, &i) in order.iter().enumerate() {
        let col = u.column(i);
        let pivot = col.iter().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { *v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        us.set_column(c, &(col * sign));
        vts.set_row(c, &(vt.row(i) * sign));
        s.push(svd.singular_values[i]);
    }
    (us, s, vts)
}

/// Rank-`rank` proper orthogonal decomposition of `field`.
pub fn pod(field: &SpatiotemporalField, rank: usize) -> Result<ModalDecomposition> {
    let x = field.snapshot_matrix();
    let max_rank = x.nrows().min(x.ncols());
    if rank < 1 || rank > max_rank {
        return Err(invalid("rank", format!("must be in 1..={max_rank}, got {rank}")));
    }
    let (u, s, vt) = sorted_svd(&x);
    let modes = u.columns(0, rank).into_owned();
    let mut time_coeffs = vt.rows(0, rank).into_owned();
    for (i, sv) in s.iter().take(rank).enumerate() {
        time_coeffs.row_mut(i).scale_mut(*sv);
    }
    Ok(ModalDecomposition {
        modes,
        singular_values: s[..rank].to_vec(),
        time_coeffs,
        total_energy: x.norm_squared(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RpcaOptions {
    /// Initial penalty; `None` uses `1.25 / ||M||_2`.
    pub mu: Option<f64>,
    /// Sparsity weight; `None` uses `1 / sqrt(max(n_space, n_time))`.
    pub lambda: Option<f64>,
    /// Stop when `||M - L - S||_F / ||M||_F < tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RpcaOptions {
    fn default() -> Self {
        Self {
            mu: None,
            lambda: None,
            tol: 1e-9,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpcaResult {
    pub low_rank: SpatiotemporalField,
    pub sparse: SpatiotemporalField,
    pub iterations: usize,
    pub converged: bool,
    /// Relative feasibility residual at exit.
    pub residual: f64,
}

impl RpcaResult {
    /// Leading left singular vector of the low-rank part.
    pub fn first_mode(&self) -> Vec<f64> {
        let (u, s, _) = sorted_svd(&self.low_rank.snapshot_matrix());
        if s.first().map_or(true, |v| *v == 0.0) {
            return alloc::vec![0.0; u.nrows()];
        }
        u.column(0).iter().copied().collect()
    }
}

fn soft(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Singular value thresholding: `U soft(S, thr) V^T`.
fn svt(m: &DMatrix<f64>, thr: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut out = DMatrix::<f64>::zeros(m.nrows(), m.ncols());
    for (i, s) in svd.singular_values.iter().enumerate() {
        let s = soft(*s, thr);
        if s > 0.0 {
            out += u.column(i) * vt.row(i) * s;
        }
    }
    out
}

/// Principal component pursuit by the inexact augmented Lagrangian method:
/// alternate singular value thresholding for `L` and entrywise soft
/// thresholding for `S`, then a dual ascent step on `M - L - S`.
pub fn rpca(field: &SpatiotemporalField, opts: &RpcaOptions) -> Result<RpcaResult> {
    let m = field.snapshot_matrix();
    let (k, t) = m.shape();
    let dt = field.dt();
    let norm_fro = m.norm();
    if norm_fro == 0.0 {
        let zero = SpatiotemporalField::zeros(t, k, dt)?;
        return Ok(RpcaResult {
            low_rank: zero.clone(),
            sparse: zero,
            iterations: 0,
            converged: true,
            residual: 0.0,
        });
    }
    let lambda = opts.lambda.unwrap_or(1.0 / (k.max(t) as f64).sqrt());
    if !(lambda > 0.0) || !(opts.tol > 0.0) {
        return Err(invalid("rpca", "lambda and tol must be positive"));
    }
    let norm_two = m.clone().svd(false, false).singular_values.max();
    let norm_inf = m.amax();
    let mut mu = opts.mu.unwrap_or(1.25 / norm_two);
    if !(mu > 0.0) {
        return Err(invalid("mu", "must be positive"));
    }
    let mu_max = mu * 1e7;
    let rho = 1.5;
    let mut y = &m / norm_two.max(norm_inf / lambda);
    let mut l = DMatrix::<f64>::zeros(k, t);
    let mut s = DMatrix::<f64>::zeros(k, t);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        l = svt(&(&m - &s + &y / mu), 1.0 / mu);
        let target = &m - &l + &y / mu;
        s = target.map(|v| soft(v, lambda / mu));
        let z = &m - &l - &s;
        residual = z.norm() / norm_fro;
        if residual < opts.tol {
            converged = true;
            break;
        }
        y += z * mu;
        mu = (mu * rho).min(mu_max);
    }
    Ok(RpcaResult {
        low_rank: SpatiotemporalField::from_snapshots(&l, dt)?,
        sparse: SpatiotemporalField::from_snapshots(&s, dt)?,
        iterations,
        converged,
        residual,
    })
}
