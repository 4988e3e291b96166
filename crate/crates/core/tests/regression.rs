use std::f64::consts::PI;

use comoving_core::library::{build_library, FunctionLibrary, TermKind};
use comoving_core::shift::{shift_field, Interpolation, ShiftSpec};
use comoving_core::sr3::{fit_sr3, Lambda, Regularizer, Sr3Options};
use comoving_core::synth::{synth_field, Motion, Pulse, SynthSpec};
use comoving_core::tracking::{PeakPoint, WaveTrack};
use comoving_core::SpatiotemporalField;
use proptest::prelude::*;

fn track(xs: &[f64]) -> WaveTrack {
    WaveTrack {
        label: 0,
        points: xs
            .iter()
            .enumerate()
            .map(|(t, x)| PeakPoint {
                t_index: t,
                x_index: *x,
                intensity: 1.0,
            })
            .collect(),
        unwrapped_x: xs.to_vec(),
    }
}

/// Least squares by Gaussian elimination with partial pivoting on the normal
/// equations, written out here so that it shares nothing with the solver.
fn oracle_ls(lib: &FunctionLibrary, xs: &[f64]) -> Vec<f64> {
    let m = lib.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (t, x) in xs.iter().enumerate() {
        let row = lib.eval_row(t as f64);
        for i in 0..m {
            for j in 0..m {
                a[i][j] += row[i] * row[j];
            }
            a[i][m] += row[i] * x;
        }
    }
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..m).map(|i| a[i][m] / a[i][i]).collect()
}

#[test]
fn unregularized_limit_is_least_squares() {
    let lib = build_library(&[TermKind::Polynomial(2), TermKind::Sinusoid(vec![0.2])]).unwrap();
    let xs: Vec<f64> = (0..60)
        .map(|t| {
            let t = t as f64;
            1.0 + 0.5 * t - 0.01 * t * t + 2.0 * (0.2 * t).sin() + 0.3 * (1.7 * t).cos()
        })
        .collect();
    let opts = Sr3Options {
        lambda: Lambda::Absolute(0.0),
        zeta: 1e8,
        ..Default::default()
    };
    let model = fit_sr3(&[track(&xs)], &lib, 1.0, &opts).unwrap();
    let want = oracle_ls(&lib, &xs);
    for (j, w) in want.iter().enumerate() {
        assert!((model.c[(j, 0)] - w).abs() <= 1e-6 * (1.0 + w.abs()), "term {j}");
    }
}

#[test]
fn sparse_recovery_of_a_line() {
    let lib = build_library(&[TermKind::Polynomial(2), TermKind::Sinusoid(vec![1.0])]).unwrap();
    let xs: Vec<f64> = (0..50).map(|t| 3.0 * t as f64).collect();
    for f in [0.01, 0.05, 0.1, 0.2] {
        for reg in [Regularizer::L1, Regularizer::L0] {
            let opts = Sr3Options {
                lambda: Lambda::Relative(f),
                regularizer: reg,
                ..Default::default()
            };
            let model = fit_sr3(&[track(&xs)], &lib, 1.0, &opts).unwrap();
            assert_eq!(model.active_terms(0), vec![1]);
            assert!((model.coefficients[(1, 0)] - 3.0).abs() < 0.01);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn objective_never_increases(
        coefs in prop::collection::vec(-3.0f64..3.0, 4),
        noise in prop::collection::vec(-1.0f64..1.0, 40),
        f in 0.0f64..0.5,
        l0 in any::<bool>(),
        zeta in 0.1f64..10.0,
    ) {
        let lib = build_library(&[TermKind::Linear, TermKind::Sinusoid(vec![0.3])]).unwrap();
        let xs: Vec<f64> = (0..40).map(|t| lib.combine(&coefs, t as f64) + noise[t]).collect();
        let opts = Sr3Options {
            lambda: Lambda::Relative(f),
            zeta,
            regularizer: if l0 { Regularizer::L0 } else { Regularizer::L1 },
            ..Default::default()
        };
        let model = fit_sr3(&[track(&xs)], &lib, 1.0, &opts).unwrap();
        for w in model.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn zero_lambda_satisfies_normal_equations(coefs in prop::collection::vec(-3.0f64..3.0, 3), noise in prop::collection::vec(-1.0f64..1.0, 30)) {
        let lib = build_library(&[TermKind::Polynomial(2)]).unwrap();
        let xs: Vec<f64> = (0..30).map(|t| lib.combine(&coefs, t as f64) + noise[t]).collect();
        let opts = Sr3Options { lambda: Lambda::Absolute(0.0), ..Default::default() };
        let model = fit_sr3(&[track(&xs)], &lib, 1.0, &opts).unwrap();
        let c: Vec<f64> = (0..3).map(|j| model.c[(j, 0)]).collect();
        let mut grad = [0.0; 3];
        let mut rhs = [0.0; 3];
        for (t, x) in xs.iter().enumerate() {
            let row = lib.eval_row(t as f64);
            let r = lib.combine(&c, t as f64) - x;
            for j in 0..3 {
                grad[j] += row[j] * r;
                rhs[j] += row[j] * x;
            }
        }
        let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(gn <= 1e-8 * rn);
    }
}

fn smooth_field(n_time: usize, amp: &[f64]) -> SpatiotemporalField {
    let k = 256;
    let v = (0..n_time * k)
        .map(|i| {
            let (t, x) = ((i / k) as f64, (i % k) as f64);
            amp[0] * (2.0 * PI * x / 256.0 + 0.1 * t).sin() + amp[1] * (4.0 * PI * x / 256.0).cos() + 2.0
        })
        .collect();
    SpatiotemporalField::new(v, n_time, k, 1.0).unwrap()
}

#[test]
fn linear_speed_straightens_a_pulse() {
    let s = SynthSpec {
        n_time: 50,
        n_space: 100,
        dt: 1.0,
        pulses: vec![Pulse::gaussian(1.0, 2.0, 20.0, Motion::Constant { speed: 3.0 })],
        noise_sigma: 0.0,
        seed: 0,
    };
    let (f, _) = synth_field(&s).unwrap();
    let offsets: Vec<f64> = (0..50).map(|r| 3.0 * r as f64).collect();
    let g = shift_field(&f, &ShiftSpec::linear(offsets)).unwrap();
    let am = g.row_argmax();
    assert!(am.iter().all(|a| *a == am[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn nearest_shift_roundtrip_is_exact(offs in prop::collection::vec(-300.0f64..300.0, 4)) {
        let f = smooth_field(4, &[1.0, 0.5]);
        let spec = ShiftSpec { offsets: offs.iter().map(|o| o.round()).collect(), interpolation: Interpolation::Nearest };
        let back = shift_field(&shift_field(&f, &spec).unwrap(), &spec.negated()).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn linear_shift_roundtrip_within_tolerance(offs in prop::collection::vec(-300.0f64..300.0, 4), a in 0.1f64..1.0) {
        let f = smooth_field(4, &[a, 0.5]);
        let spec = ShiftSpec::linear(offs);
        let back = shift_field(&shift_field(&f, &spec).unwrap(), &spec.negated()).unwrap();
        for (u, v) in f.values().iter().zip(back.values()) {
            prop_assert!((u - v).abs() <= 1e-3 * u.abs());
        }
    }

    #[test]
    fn shifts_compose(s1 in prop::collection::vec(-100.0f64..100.0, 4), s2 in prop::collection::vec(-100.0f64..100.0, 4)) {
        let f = smooth_field(4, &[1.0, 0.5]);
        let twice = shift_field(&shift_field(&f, &ShiftSpec::linear(s1.clone())).unwrap(), &ShiftSpec::linear(s2.clone())).unwrap();
        let sum: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| (a + b) % 256.0).collect();
        let once = shift_field(&f, &ShiftSpec::linear(sum)).unwrap();
        for (u, v) in twice.values().iter().zip(once.values()) {
            prop_assert!((u - v).abs() <= 1e-3 * u.abs());
        }
    }
}
