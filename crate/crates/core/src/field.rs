//! Space-time intensity fields on a periodic 1D domain.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Intensity `u(x, t)` sampled on `n_time` rows (snapshots) by `n_space`
/// columns (spatial samples over one period).
///
/// Values are stored row-major: `values[t * n_space + x]`. Spatial index
/// arithmetic is modulo `n_space`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatiotemporalField {
    values: Vec<f64>,
    n_time: usize,
    n_space: usize,
    dt: f64,
}

impl SpatiotemporalField {
    pub fn new(values: Vec<f64>, n_time: usize, n_space: usize, dt: f64) -> Result<Self> {
        if n_space < 2 {
            return Err(invalid("n_space", format!("need at least 2 spatial samples, got {n_space}")));
        }
        if n_time < 2 {
            return Err(invalid("n_time", format!("need at least 2 time rows, got {n_time}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be finite and positive, got {dt}")));
        }
        if values.len() != n_time * n_space {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values ({n_time}x{n_space})", n_time * n_space),
                found: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i / n_space,
                col: i % n_space,
            });
        }
        Ok(Self {
            values,
            n_time,
            n_space,
            dt,
        })
    }

    pub fn zeros(n_time: usize, n_space: usize, dt: f64) -> Result<Self> {
        Self::new(alloc::vec![0.0; n_time * n_space], n_time, n_space, dt)
    }

    /// Builds a field from a `n_space x n_time` snapshot matrix (one column per time).
    pub fn from_snapshots(snapshots: &DMatrix<f64>, dt: f64) -> Result<Self> {
        let (k, t) = snapshots.shape();
        let mut values = Vec::with_capacity(k * t);
        for r in 0..t {
            values.extend(snapshots.column(r).iter().copied());
        }
        Self::new(values, t, k, dt)
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    /// Length of the periodic domain in pixel units (equal to `n_space`).
    pub fn domain_length(&self) -> f64 {
        self.n_space as f64
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_space..(t + 1) * self.n_space]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_space)
    }

    /// Value at row `t`, column `x` taken modulo `n_space`.
    pub fn get(&self, t: usize, x: isize) -> f64 {
        let k = self.n_space as isize;
        self.values[t * self.n_space + x.rem_euclid(k) as usize]
    }

    /// Snapshot matrix, `n_space x n_time`, one column per time row.
    pub fn snapshot_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_space, self.n_time, |x, t| self.values[t * self.n_space + x])
    }

    /// Rows `start..end` as a new field with the same `dt`.
    pub fn time_slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_time {
            return Err(invalid(
                "time range",
                format!("{start}..{end} is not a non-empty range within 0..{}", self.n_time),
            ));
        }
        Self::new(
            self.values[start * self.n_space..end * self.n_space].to_vec(),
            end - start,
            self.n_space,
            self.dt,
        )
    }

    /// Index of the largest value in each row (first index on ties).
    pub fn row_argmax(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n_time != other.n_time || self.n_space != other.n_space {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.n_time, self.n_space),
                found: format!("{}x{}", other.n_time, other.n_space),
            });
        }
        Ok(())
    }
}

/// Fraction of the variance of `truth` (about its mean) reproduced by `pred`:
/// `1 - SSE / SST`. Negative when `pred` is worse than the mean.
pub fn variance_explained(truth: &SpatiotemporalField, pred: &SpatiotemporalField) -> Result<f64> {
    truth.same_shape(pred)?;
    variance_explained_slices(truth.values(), pred.values())
}

pub fn variance_explained_slices(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", truth.len()),
            found: format!("{} values", pred.len()),
        });
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let sse: f64 = truth.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / sst)
}

/// Pearson correlation of two equally sized sample sets; `None` if either is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(vals: &[f64]) -> SpatiotemporalField {
        // pad to the 2x2 minimum by duplicating into two rows
        let mut v = vals.to_vec();
        v.extend_from_slice(vals);
        SpatiotemporalField::new(v, 2, vals.len(), 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SpatiotemporalField::new(vec![0.0; 3], 1, 3, 1.0).is_err());
        assert!(SpatiotemporalField::new(vec![0.0; 2], 2, 1, 1.0).is_err());
        assert!(SpatiotemporalField::new(vec![0.0; 5], 2, 3, 1.0).is_err());
        assert!(SpatiotemporalField::new(vec![0.0; 6], 2, 3, 0.0).is_err());
        let err = SpatiotemporalField::new(vec![0.0, 0.0, 0.0, f64::NAN, 0.0, 0.0], 2, 3, 1.0);
        assert_eq!(err, Err(Error::NonFinite { row: 1, col: 0 }));
    }

    #[test]
    fn periodic_indexing() {
        let f = SpatiotemporalField::new((0..8).map(f64::from).collect(), 2, 4, 1.0).unwrap();
        assert_eq!(f.get(1, -1), 7.0);
        assert_eq!(f.get(0, 5), 1.0);
    }

    #[test]
    fn variance_explained_cases() {
        let t = line(&[1.0, 2.0, 3.0]);
        assert_eq!(variance_explained(&t, &t).unwrap(), 1.0);
        assert_eq!(variance_explained(&t, &line(&[2.0, 2.0, 2.0])).unwrap(), 0.0);
        let ve = variance_explained(&t, &line(&[1.0, 2.0, 4.0])).unwrap();
        assert!((ve - 0.5).abs() < 1e-15);
        let c = line(&[3.0, 3.0, 3.0]);
        assert_eq!(variance_explained(&c, &c), Err(Error::UndefinedMetric));
    }

    #[test]
    fn snapshot_matrix_roundtrip() {
        let f = SpatiotemporalField::new((0..12).map(f64::from).collect(), 3, 4, 0.5).unwrap();
        let m = f.snapshot_matrix();
        assert_eq!(m.shape(), (4, 3));
        assert_eq!(m[(1, 2)], 9.0);
        assert_eq!(SpatiotemporalField::from_snapshots(&m, 0.5).unwrap(), f);
    }
}
