use comoving_core::decomposition::{pod, rpca, RpcaOptions};
use comoving_core::dmd::{dmd_forecast, exact_dmd};
use comoving_core::lotka_volterra::{lv_conserved, lv_fit_sweep, lv_simulate, to_positive, GridAxis, LvParams, ParamGrid};
use comoving_core::oscillator::fit_oscillator;
use comoving_core::SpatiotemporalField;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(n_time: usize, n_space: usize, seed: u64) -> SpatiotemporalField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..n_time * n_space).map(|_| rng.random_range(-1.0..1.0)).collect();
    SpatiotemporalField::new(v, n_time, n_space, 1.0).unwrap()
}

#[test]
fn pod_modes_are_orthonormal_and_full_rank_reconstructs() {
    let f = random_field(9, 14, 3);
    let d = pod(&f, 9).unwrap();
    let gram = d.modes.transpose() * &d.modes;
    assert!((gram - DMatrix::<f64>::identity(9, 9)).amax() < 1e-12);
    let back = d.reconstruct(1.0).unwrap();
    for (a, b) in f.values().iter().zip(back.values()) {
        assert!((a - b).abs() < 1e-12);
    }
    let total: f64 = (0..9).map(|i| d.energy_fraction(i)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let reference = f.snapshot_matrix().singular_values();
    let mut want: Vec<f64> = reference.iter().copied().collect();
    want.sort_by(|a, b| b.total_cmp(a));
    for (s, w) in d.singular_values.iter().zip(&want) {
        assert!((s - w).abs() < 1e-12 * want[0]);
    }
}

#[test]
fn pod_truncation_keeps_leading_values() {
    let f = random_field(12, 10, 4);
    let full = pod(&f, 10).unwrap();
    let part = pod(&f, 3).unwrap();
    assert_eq!(part.singular_values, full.singular_values[..3].to_vec());
    assert!(part.singular_values.windows(2).all(|w| w[0] >= w[1]));
}

fn planted(k: usize, t: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DMatrix::from_fn(k, 2, |_, _| rng.random_range(-1.0..1.0));
    let v = DMatrix::from_fn(2, t, |_, _| rng.random_range(-1.0..1.0));
    let l = u * v;
    let mut s = DMatrix::<f64>::zeros(k, t);
    let n_sparse = k * t / 100;
    let mut placed = 0;
    while placed < n_sparse {
        let (i, j) = (rng.random_range(0..k), rng.random_range(0..t));
        if s[(i, j)] == 0.0 {
            s[(i, j)] = if rng.random::<bool>() { 5.0 } else { -5.0 };
            placed += 1;
        }
    }
    (l, s)
}

#[test]
fn rpca_recovers_planted_low_rank() {
    let (l, s) = planted(60, 80, 11);
    let f = SpatiotemporalField::from_snapshots(&(&l + &s), 1.0).unwrap();
    let r = rpca(&f, &RpcaOptions::default()).unwrap();
    assert!(r.converged);
    let lr = r.low_rank.snapshot_matrix();
    let sp = r.sparse.snapshot_matrix();
    assert!((&lr - &l).norm() / l.norm() <= 1e-4);
    assert!((&lr + &sp - (&l + &s)).norm() / (&l + &s).norm() <= 1e-6);
    let sv = lr.singular_values();
    assert_eq!(sv.iter().filter(|v| **v > 1e-6 * sv.max()).count(), 2);
}

#[test]
fn dmd_of_linear_system_forecasts_continuation() {
    // x_{k+1} = A x_k with a damped rotation and a decaying real mode.
    let a = DMatrix::from_row_slice(3, 3, &[0.95 * 0.3f64.cos(), -0.95 * 0.3f64.sin(), 0.0, 0.95 * 0.3f64.sin(), 0.95 * 0.3f64.cos(), 0.0, 0.0, 0.0, 0.8]);
    let mut data = DMatrix::<f64>::zeros(3, 40);
    data.set_column(0, &nalgebra::DVector::from_vec(vec![1.0, 0.5, 2.0]));
    for k in 1..40 {
        let next = &a * data.column(k - 1);
        data.set_column(k, &next);
    }
    let train = data.columns(0, 20).into_owned();
    let model = exact_dmd(&train, 3, 1.0).unwrap();
    let pred = dmd_forecast(&model, 39);
    assert!((pred - &data).amax() < 1e-9);
    let mods: Vec<f64> = model.eigenvalues.iter().map(|l| l.norm()).collect();
    assert!((mods[0] - 0.95).abs() < 1e-10 && (mods[2] - 0.8).abs() < 1e-10);
    let ct = model.continuous_eigenvalues();
    assert!((ct[0].im.abs() - 0.3).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dmd_rotation_forecast_keeps_norm(theta in 0.05f64..3.0, x0 in -2.0f64..2.0, y0 in 0.1f64..2.0) {
        let data = DMatrix::from_fn(2, 30, |i, k| {
            let (c, s) = ((theta * k as f64).cos(), (theta * k as f64).sin());
            if i == 0 { c * x0 - s * y0 } else { s * x0 + c * y0 }
        });
        let model = exact_dmd(&data, 2, 1.0).unwrap();
        for l in &model.eigenvalues {
            prop_assert!((l.norm() - 1.0).abs() < 1e-10);
        }
        let pred = dmd_forecast(&model, 200);
        let r0 = (x0 * x0 + y0 * y0).sqrt();
        for k in 0..=200 {
            prop_assert!((pred.column(k).norm() - r0).abs() < 1e-8 * r0);
        }
    }

    #[test]
    fn oscillator_fit_is_scale_equivariant(a in 0.5f64..20.0, g in -0.002f64..0.002, w in 0.05f64..0.5, phi in -3.0f64..3.0, scale in 0.1f64..10.0) {
        let x: Vec<f64> = (0..400).map(|t| { let t = t as f64; a * (g * t).exp() * (w * t + phi).cos() }).collect();
        let f1 = fit_oscillator(&x, 1.0).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let f2 = fit_oscillator(&xs, 1.0).unwrap();
        prop_assert!((f1.frequency - w).abs() < 1e-6);
        prop_assert!((f1.growth - g).abs() < 1e-7);
        prop_assert!((f2.amplitude - scale * f1.amplitude).abs() < 1e-6 * scale * a);
        prop_assert!((f2.frequency - f1.frequency).abs() < 1e-9);
    }
}

#[test]
fn oscillator_recovers_growing_cosine() {
    let x: Vec<f64> = (0..600)
        .map(|t| {
            let t = t as f64;
            18.38 * (0.0011 * t).exp() * (0.0837 * t).cos()
        })
        .collect();
    let f = fit_oscillator(&x, 1.0).unwrap();
    assert!((f.growth - 0.0011).abs() < 1e-4);
    assert!((f.frequency - 0.0837).abs() < 1e-3);
    assert!((f.amplitude - 18.38).abs() < 1e-3);
    assert!(f.residual < 1e-6);
}

#[test]
fn oscillator_pure_cosine_with_dt() {
    let dt = 0.5;
    let x: Vec<f64> = (0..200).map(|k| 2.0 * (1.3 * k as f64 * dt).cos()).collect();
    let f = fit_oscillator(&x, dt).unwrap();
    assert!((f.frequency - 1.3).abs() < 1e-8);
    assert!(f.growth.abs() < 1e-9);
    assert!(f.phase.abs() < 1e-8);
    let p = f.predict(200, dt);
    assert!(p.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-7));
}

fn drift(p: &LvParams, n: usize, h: f64) -> f64 {
    let tr = lv_simulate(p, 1.0, 0.3, n, h).unwrap();
    let v = lv_conserved(p, &tr).unwrap();
    v.iter().map(|x| (x - v[0]).abs()).fold(0.0, f64::max) / v[0].abs()
}

#[test]
fn lv_first_integral_is_conserved_at_fourth_order() {
    let p = LvParams::new(0.07, 0.13, 0.10, 0.05).unwrap();
    let d1 = drift(&p, 1000, 1.0);
    assert!(d1 <= 1e-6, "drift {d1:e}");
    let d2 = drift(&p, 2000, 0.5);
    let ratio = d1 / d2;
    assert!((10.0..24.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn lv_orbit_is_positive_and_periodic() {
    let p = LvParams::new(0.07, 0.13, 0.10, 0.05).unwrap();
    let tr = lv_simulate(&p, 1.0, 0.3, 2000, 1.0).unwrap();
    assert_eq!(tr.len(), 2001);
    assert!(tr.y.iter().chain(&tr.z).all(|v| *v > 0.0));
    // Returns close to the start after some period.
    let (i, d) = (50..2001)
        .map(|i| (i, (tr.y[i] - 1.0).hypot(tr.z[i] - 0.3)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!(d < 0.02, "closest return {d} at {i}");
}

#[test]
fn lv_sweep_recovers_generating_parameters() {
    let p = LvParams::new(0.07, 0.13, 0.10, 0.05).unwrap();
    let tr = lv_simulate(&p, 1.0, 0.3, 1000, 1.0).unwrap();
    let axis = GridAxis { start: 0.03, stop: 0.15, step: 0.01 };
    let grid = ParamGrid { alpha: axis, beta: axis, delta: axis, gamma: axis };
    let fit = lv_fit_sweep(&tr.y, &tr.z, 500, &grid, 1.0).unwrap();
    assert_eq!(fit.params, p);
    assert_eq!(fit.train_error, 0.0);
    assert_eq!(fit.candidates, 13usize.pow(4));
}

#[test]
fn default_grid_contains_exact_decimals() {
    let v = GridAxis::default().values();
    assert_eq!(v.len(), 30);
    assert_eq!(v[6], 0.07);
    assert_eq!(v[12], 0.13);
    assert_eq!(v[29], 0.3);
}

#[test]
fn to_positive_maps_onto_unit_interval_above_floor() {
    let x = [-3.0, 1.0, 5.0];
    let (y, (sign, shift, scale)) = to_positive(&x, true, 0.5).unwrap();
    assert_eq!(y, vec![1.5, 1.0, 0.5]);
    for (a, b) in x.iter().zip(&y) {
        assert!(((sign * a - shift) / scale + 0.5 - b).abs() < 1e-15);
    }
    assert!(to_positive(&[2.0, 2.0], false, 0.5).is_err());
}

#[test]
fn lv_oscillation_is_near_linearized_frequency() {
    let p = LvParams::new(0.07, 0.13, 0.10, 0.05).unwrap();
    let tr = lv_simulate(&p, 1.0, 0.3, 1000, 1.0).unwrap();
    let fit = fit_oscillator(&tr.y[500..], 1.0).unwrap();
    let expected = (p.alpha * p.gamma).sqrt();
    assert!((fit.frequency - expected).abs() / expected < 0.2);
}
