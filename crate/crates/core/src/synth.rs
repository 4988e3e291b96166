//! Synthetic traveling-pulse fields with exact ground-truth trajectories.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::field::SpatiotemporalField;
use crate::periodic::wrap;
use crate::tracking::{PeakPoint, WaveTrack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PulseShape {
    /// `amplitude * exp(-d^2 / (2 width^2))`, summed over neighbouring periods.
    Gaussian,
    /// Linear ramp over `width` pixels up to the front, then an abrupt drop.
    Sawtooth,
}

/// Displacement law of a pulse. Positions are in pixels, time in units of `dt`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Motion {
    Constant {
        speed: f64,
    },
    /// Speed `speed + amplitude * frequency * cos(frequency t + phase)`.
    Sinusoidal {
        speed: f64,
        amplitude: f64,
        frequency: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        phase: f64,
    },
    /// Offset `amplitude * exp(growth t) * cos(frequency t)` on top of a constant speed.
    DampedOscillation {
        speed: f64,
        amplitude: f64,
        growth: f64,
        frequency: f64,
    },
    /// Constant speed plus an explicit per-row offset (must cover every row).
    Tabulated { speed: f64, offsets: Vec<f64> },
}

impl Motion {
    /// Displacement from the initial position at time row `row`.
    pub fn displacement(&self, row: usize, dt: f64) -> f64 {
        let t = row as f64 * dt;
        match *self {
            Motion::Constant { speed } => speed * t,
            Motion::Sinusoidal {
                speed,
                amplitude,
                frequency,
                phase,
            } => speed * t + amplitude * ((frequency * t + phase).sin() - phase.sin()),
            Motion::DampedOscillation {
                speed,
                amplitude,
                growth,
                frequency,
            } => speed * t + amplitude * ((growth * t).exp() * (frequency * t).cos() - 1.0),
            Motion::Tabulated { speed, ref offsets } => speed * t + offsets[row] - offsets[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pulse {
    pub shape: PulseShape,
    pub amplitude: f64,
    pub width: f64,
    pub position: f64,
    pub motion: Motion,
}

impl Pulse {
    pub fn gaussian(amplitude: f64, width: f64, position: f64, motion: Motion) -> Self {
        Self {
            shape: PulseShape::Gaussian,
            amplitude,
            width,
            position,
            motion,
        }
    }

    /// Pulse value at column `x` when centered at `center` on a domain of length `k`.
    pub fn profile(&self, x: f64, center: f64, k: f64) -> f64 {
        match self.shape {
            PulseShape::Gaussian => {
                let mut v = 0.0;
                for image in [-1.0, 0.0, 1.0] {
                    let d = x - center + image * k;
                    v += (-d * d / (2.0 * self.width * self.width)).exp();
                }
                self.amplitude * v
            }
            PulseShape::Sawtooth => {
                // signed distance in [-k/2, k/2)
                let d = wrap(x - center + 0.5 * k, k) - 0.5 * k;
                if d <= 0.0 && d >= -self.width {
                    self.amplitude * (1.0 + d / self.width)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub n_time: usize,
    pub n_space: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_dt"))]
    pub dt: f64,
    pub pulses: Vec<Pulse>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise_sigma: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

#[cfg(feature = "serde")]
fn default_dt() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_space < 2 || self.n_time < 2 {
            return Err(invalid("shape", "need at least 2 rows and 2 columns"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma", format!("must be >= 0, got {}", self.noise_sigma)));
        }
        for (i, p) in self.pulses.iter().enumerate() {
            if !(p.width > 0.0 && p.width.is_finite()) {
                return Err(invalid("width", format!("pulse {i}: must be > 0, got {}", p.width)));
            }
            if !(p.amplitude > 0.0 && p.amplitude.is_finite()) {
                return Err(invalid(
                    "amplitude",
                    format!("pulse {i}: must be > 0, got {}", p.amplitude),
                ));
            }
            if let Motion::Tabulated { offsets, .. } = &p.motion {
                if offsets.len() < self.n_time {
                    return Err(invalid(
                        "offsets",
                        format!("pulse {i}: {} offsets for {} rows", offsets.len(), self.n_time),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Unwrapped center of pulse `i` at row `row`.
    pub fn center(&self, i: usize, row: usize) -> f64 {
        let p = &self.pulses[i];
        p.position + p.motion.displacement(row, self.dt)
    }
}

/// Renders the spec into a field and returns the exact pulse trajectories.
///
/// With `noise_sigma == 0` the field holds the analytic pulse sums exactly;
/// otherwise i.i.d. Gaussian noise drawn from a ChaCha8 stream seeded by `seed`
/// is added entry by entry in row-major order.
pub fn synth_field(spec: &SynthSpec) -> Result<(SpatiotemporalField, Vec<WaveTrack>)> {
    spec.validate()?;
    let k = spec.n_space as f64;
    let mut values = alloc::vec![0.0; spec.n_time * spec.n_space];
    let mut tracks = Vec::with_capacity(spec.pulses.len());
    for (i, pulse) in spec.pulses.iter().enumerate() {
        let mut points = Vec::with_capacity(spec.n_time);
        let mut unwrapped = Vec::with_capacity(spec.n_time);
        for r in 0..spec.n_time {
            let c = spec.center(i, r);
            let cw = wrap(c, k);
            let row = &mut values[r * spec.n_space..(r + 1) * spec.n_space];
            for (x, v) in row.iter_mut().enumerate() {
                *v += pulse.profile(x as f64, cw, k);
            }
            points.push(PeakPoint {
                t_index: r,
                x_index: cw,
                intensity: pulse.amplitude,
            });
            unwrapped.push(c);
        }
        tracks.push(WaveTrack {
            label: i,
            points,
            unwrapped_x: unwrapped,
        });
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|_| invalid("noise_sigma", "not a valid standard deviation"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let field = SpatiotemporalField::new(values, spec.n_time, spec.n_space, spec.dt)?;
    Ok((field, tracks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one_pulse(speed: f64, n_time: usize, noise: f64) -> SynthSpec {
        SynthSpec {
            n_time,
            n_space: 180,
            dt: 1.0,
            pulses: vec![Pulse::gaussian(1.0, 3.0, 37.0, Motion::Constant { speed })],
            noise_sigma: noise,
            seed: 7,
        }
    }

    #[test]
    fn stationary_pulse_has_constant_argmax() {
        let (f, _) = synth_field(&one_pulse(0.0, 20, 0.0)).unwrap();
        assert!(f.row_argmax().iter().all(|&a| a == 37));
    }

    #[test]
    fn moving_pulse_argmax_follows_generator() {
        let (f, tracks) = synth_field(&one_pulse(2.0, 20, 0.0)).unwrap();
        assert_eq!(f.row_argmax()[10], (37 + 20) % 180);
        assert_eq!(tracks[0].unwrapped_x[10], 57.0);
        // wraps across the seam
        let (f, _) = synth_field(&one_pulse(-4.0, 20, 0.0)).unwrap();
        assert_eq!(f.row_argmax()[10], 180 + 37 - 40);
    }

    #[test]
    fn counter_moving_pulses_have_opposite_slopes() {
        let spec = SynthSpec {
            n_time: 10,
            n_space: 180,
            dt: 1.0,
            pulses: vec![
                Pulse::gaussian(1.0, 2.0, 40.0, Motion::Constant { speed: 3.0 }),
                Pulse::gaussian(0.8, 2.0, 130.0, Motion::Constant { speed: -3.0 }),
            ],
            noise_sigma: 0.0,
            seed: 0,
        };
        let (f, _) = synth_field(&spec).unwrap();
        for r in 0..10 {
            let row = f.row(r);
            let a = (40 + 3 * r) % 180;
            let b = 130 - 3 * r;
            assert!(row[a] > row[(a + 1) % 180] && row[a] > row[a - 1]);
            assert!(row[b] > row[b + 1] && row[b] > row[b - 1]);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let a = synth_field(&one_pulse(1.0, 5, 0.1)).unwrap().0;
        let b = synth_field(&one_pulse(1.0, 5, 0.1)).unwrap().0;
        assert_eq!(a, b);
        let mut spec = one_pulse(1.0, 5, 0.1);
        spec.seed = 8;
        assert_ne!(a, synth_field(&spec).unwrap().0);
    }

    #[test]
    fn validation() {
        let mut s = one_pulse(1.0, 5, 0.0);
        s.pulses[0].width = 0.0;
        assert!(synth_field(&s).is_err());
        let mut s = one_pulse(1.0, 5, 0.0);
        s.pulses[0].amplitude = -1.0;
        assert!(synth_field(&s).is_err());
    }

    #[test]
    fn sawtooth_front() {
        let p = Pulse {
            shape: PulseShape::Sawtooth,
            amplitude: 2.0,
            width: 4.0,
            position: 1.0,
            motion: Motion::Constant { speed: 0.0 },
        };
        assert_eq!(p.profile(1.0, 1.0, 16.0), 2.0);
        assert_eq!(p.profile(15.0, 1.0, 16.0), 1.0);
        assert_eq!(p.profile(2.0, 1.0, 16.0), 0.0);
    }
}
