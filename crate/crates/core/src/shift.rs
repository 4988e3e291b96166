//! Row-wise circular translation of fields.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::field::SpatiotemporalField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Interpolation {
    Nearest,
    #[default]
    Linear,
}

/// Spatial offset (px) removed from each time row.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub offsets: Vec<f64>,
    pub interpolation: Interpolation,
}

impl ShiftSpec {
    pub fn linear(offsets: Vec<f64>) -> Self {
        Self {
            offsets,
            interpolation: Interpolation::Linear,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            offsets: self.offsets.iter().map(|o| -o).collect(),
            interpolation: self.interpolation,
        }
    }
}

/// Translates row `r` by `-offsets[r]`: `out[r][x] = in[r][x + offsets[r]]`,
/// periodic in `x`. A feature at `x0 + offsets[r]` lands on `x0`.
///
/// Nearest mode permutes each row; linear mode interpolates between the two
/// neighbouring samples, which preserves each row's sum.
pub fn shift_field(field: &SpatiotemporalField, spec: &ShiftSpec) -> Result<SpatiotemporalField> {
    if spec.offsets.len() != field.n_time() {
        return Err(invalid(
            "offsets",
            format!("{} offsets for {} rows", spec.offsets.len(), field.n_time()),
        ));
    }
    if let Some(i) = spec.offsets.iter().position(|o| !o.is_finite()) {
        return Err(invalid("offsets", format!("offset {i} is not finite")));
    }
    let k = field.n_space();
    let ki = k as i64;
    let mut out = Vec::with_capacity(k * field.n_time());
    for (row, &off) in field.rows().zip(&spec.offsets) {
        match spec.interpolation {
            Interpolation::Nearest => {
                let s = (off.round() as i64).rem_euclid(ki) as usize;
                out.extend((0..k).map(|x| row[(x + s) % k]));
            }
            Interpolation::Linear => {
                let base = off.floor();
                let frac = off - base;
                let s = (base as i64).rem_euclid(ki) as usize;
                if frac == 0.0 {
                    out.extend((0..k).map(|x| row[(x + s) % k]));
                } else {
                    out.extend((0..k).map(|x| {
                        let a = row[(x + s) % k];
                        let b = row[(x + s + 1) % k];
                        a + frac * (b - a)
                    }));
                }
            }
        }
    }
    SpatiotemporalField::new(out, field.n_time(), k, field.dt())
}
