//! Exact dynamic mode decomposition.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::decomposition::sorted_svd;
use crate::error::{invalid, Error, Result};
use crate::field::SpatiotemporalField;

#[derive(Debug, Clone, PartialEq)]
pub struct DmdModel {
    /// Discrete-time eigenvalues, ordered by decreasing modulus then
    /// decreasing imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Exact DMD modes, one per column.
    pub modes: DMatrix<Complex64>,
    /// Coordinates of the first snapshot in the mode basis.
    pub amplitudes: Vec<Complex64>,
    pub dt: f64,
    /// Rank actually used (requested rank clipped to the numerical rank of X).
    pub rank: usize,
}

impl DmdModel {
    /// `ln(lambda) / dt`: real parts are growth rates, imaginary parts frequencies.
    pub fn continuous_eigenvalues(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|l| l.ln() / self.dt).collect()
    }

    /// `Phi Lambda^k b` for one step `k`.
    pub fn state(&self, k: usize) -> DVector<Complex64> {
        let coeffs = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues
                .iter()
                .zip(&self.amplitudes)
                .map(|(l, b)| l.powu(k as u32) * b),
        );
        &self.modes * coeffs
    }
}

/// Fits exact DMD to snapshots stored as the columns of `data`.
pub fn exact_dmd(data: &DMatrix<f64>, rank: usize, dt: f64) -> Result<DmdModel> {
    let (n, m) = data.shape();
    if m < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: m });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    let max_rank = n.min(m - 1);
    if rank < 1 || rank > max_rank {
        return Err(invalid("rank", format!("must be in 1..={max_rank}, got {rank}")));
    }
    let x = data.columns(0, m - 1).into_owned();
    let xp = data.columns(1, m - 1).into_owned();
    let (u, s, vt) = sorted_svd(&x);
    if s[0] == 0.0 {
        return Err(Error::Degenerate("snapshot matrix is zero"));
    }
    let r = rank.min(s.iter().filter(|v| **v > 1e-12 * s[0]).count());
    let ur = u.columns(0, r);
    let mut v_sinv = vt.rows(0, r).transpose();
    for (j, sv) in s.iter().take(r).enumerate() {
        v_sinv.column_mut(j).scale_mut(1.0 / sv);
    }
    let b_mat = &xp * &v_sinv; // X' V S^-1
    let a_tilde = ur.transpose() * &b_mat;

    let mut eigenvalues: Vec<Complex64> = a_tilde.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));

    let a_c = a_tilde.map(|v| Complex64::new(v, 0.0));
    let b_c = b_mat.map(|v| Complex64::new(v, 0.0));
    let u_c = ur.map(|v| Complex64::new(v, 0.0));
    let mut modes = DMatrix::<Complex64>::zeros(n, r);
    for (j, lam) in eigenvalues.iter().enumerate() {
        let w = null_vector(&a_c, *lam);
        let phi = if lam.norm() > 1e-14 { &b_c * &w / *lam } else { &u_c * &w };
        modes.set_column(j, &phi);
    }
    let x0 = DVector::from_iterator(n, data.column(0).iter().map(|v| Complex64::new(*v, 0.0)));
    let amplitudes = modes
        .clone()
        .svd(true, true)
        .solve(&x0, 1e-14)
        .map_err(|_| Error::Degenerate("mode matrix"))?;
    Ok(DmdModel {
        eigenvalues,
        modes,
        amplitudes: amplitudes.iter().copied().collect(),
        dt,
        rank: r,
    })
}

/// Unit vector minimizing `|(A - lam I) w|`.
fn null_vector(a: &DMatrix<Complex64>, lam: Complex64) -> DVector<Complex64> {
    let r = a.nrows();
    let shifted = a - DMatrix::<Complex64>::identity(r, r) * lam;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    let mut w: DVector<Complex64> = vt.row(imin).adjoint();
    // fix the phase so the largest component is real positive
    let (_, pivot) = w
        .iter()
        .fold((0.0, Complex64::new(1.0, 0.0)), |acc, c| if c.norm() > acc.0 { (c.norm(), *c) } else { acc });
    w *= pivot.conj() / pivot.norm();
    w
}

/// Exact DMD of a field with time along rows.
pub fn exact_dmd_field(field: &SpatiotemporalField, rank: usize) -> Result<DmdModel> {
    exact_dmd(&field.snapshot_matrix(), rank, field.dt())
}

/// Real part of `Phi Lambda^k b` for `k = 0..=k_max`, one snapshot per column.
pub fn dmd_forecast(model: &DmdModel, k_max: usize) -> DMatrix<f64> {
    let n = model.modes.nrows();
    let mut out = DMatrix::<f64>::zeros(n, k_max + 1);
    let mut coeffs: Vec<Complex64> = model.amplitudes.clone();
    for k in 0..=k_max {
        let state = &model.modes * DVector::from_column_slice(&coeffs);
        out.set_column(k, &state.map(|c| c.re));
        for (c, l) in coeffs.iter_mut().zip(&model.eigenvalues) {
            *c *= l;
        }
    }
    out
}
