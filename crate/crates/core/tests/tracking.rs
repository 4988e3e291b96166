use comoving_core::periodic::{circ_dist, wrap};
use comoving_core::synth::{synth_field, Motion, Pulse, SynthSpec};
use comoving_core::tracking::*;
use comoving_core::SpatiotemporalField;
use proptest::prelude::*;

fn spec(pulses: Vec<Pulse>, n_time: usize, n_space: usize) -> SynthSpec {
    SynthSpec {
        n_time,
        n_space,
        dt: 1.0,
        pulses,
        noise_sigma: 0.0,
        seed: 0,
    }
}

#[test]
fn single_pulse_detected_within_half_pixel() {
    let s = spec(vec![Pulse::gaussian(1.0, 3.0, 17.3, Motion::Constant { speed: 1.7 })], 80, 128);
    let (field, truth) = synth_field(&s).unwrap();
    let pts = detect_ridges(&field, 0.1, 5).unwrap();
    assert_eq!(pts.len(), 80);
    for (p, q) in pts.iter().zip(&truth[0].points) {
        assert_eq!(p.t_index, q.t_index);
        assert!(circ_dist(p.x_index, q.x_index, 128.0) <= 0.5);
    }
}

#[test]
fn constant_field_has_no_ridges() {
    let f = SpatiotemporalField::new(vec![3.0; 40], 4, 10, 1.0).unwrap();
    assert!(detect_ridges(&f, 0.1, 1).unwrap().is_empty());
}

#[test]
fn half_period_pair_gives_two_points_per_row() {
    let s = spec(
        vec![
            Pulse::gaussian(1.0, 2.0, 5.0, Motion::Constant { speed: 2.0 }),
            Pulse::gaussian(1.0, 2.0, 69.0, Motion::Constant { speed: 2.0 }),
        ],
        30,
        128,
    );
    let (field, _) = synth_field(&s).unwrap();
    let pts = detect_ridges(&field, 0.1, 5).unwrap();
    for t in 0..30 {
        assert_eq!(pts.iter().filter(|p| p.t_index == t).count(), 2);
    }
}

fn labels_match(tracks: &[WaveTrack], truth: &SynthSpec) -> bool {
    // each track's points sit on one generator wave
    let mut used = vec![false; truth.pulses.len()];
    for tr in tracks {
        let p0 = tr.points[0];
        let owner = (0..truth.pulses.len())
            .min_by(|&a, &b| {
                let da = circ_dist(wrap(truth.center(a, p0.t_index), 180.0), p0.x_index, 180.0);
                let db = circ_dist(wrap(truth.center(b, p0.t_index), 180.0), p0.x_index, 180.0);
                da.total_cmp(&db)
            })
            .unwrap();
        if used[owner] {
            return false;
        }
        used[owner] = true;
        for p in &tr.points {
            if circ_dist(wrap(truth.center(owner, p.t_index), 180.0), p.x_index, 180.0) > 1.0 {
                return false;
            }
        }
    }
    used.iter().all(|u| *u)
}

#[test]
fn two_parallel_tracks_cluster_exactly() {
    let s = spec(
        vec![
            Pulse::gaussian(1.0, 2.0, 10.0, Motion::Constant { speed: 4.0 }),
            Pulse::gaussian(1.0, 2.0, 100.0, Motion::Constant { speed: 4.0 }),
        ],
        40,
        180,
    );
    let (field, _) = synth_field(&s).unwrap();
    let pts = detect_ridges(&field, 0.1, 5).unwrap();
    let tracks = cluster_waves(&pts, 2, 180, &ClusterOptions::new(10.0)).unwrap();
    assert!(labels_match(&tracks, &s));
    // the eigengap suggestion is meant for short seed windows
    let head: Vec<PeakPoint> = pts.iter().filter(|p| p.t_index < 5).copied().collect();
    let opts = ClusterOptions {
        time_scale: Some(1.0),
        ..ClusterOptions::new(10.0)
    };
    assert_eq!(suggest_n_waves(&head, 180, &opts, 5).unwrap(), 2);
}

#[test]
fn three_tracks_cluster_without_misassignment() {
    let s = spec(
        vec![
            Pulse::gaussian(1.0, 2.0, 0.0, Motion::Constant { speed: 4.1 }),
            Pulse::gaussian(0.8, 2.0, 60.0, Motion::Constant { speed: 4.0 }),
            Pulse::gaussian(0.9, 2.0, 120.0, Motion::Constant { speed: 4.2 }),
        ],
        50,
        180,
    );
    let (field, _) = synth_field(&s).unwrap();
    let pts = detect_ridges(&field, 0.1, 5).unwrap();
    let tracks = cluster_waves(&pts, 3, 180, &ClusterOptions::new(5.0)).unwrap();
    assert_eq!(tracks.len(), 3);
    assert!(labels_match(&tracks, &s));
}

#[test]
fn one_wave_takes_every_point() {
    let s = spec(vec![Pulse::gaussian(1.0, 2.0, 0.0, Motion::Constant { speed: 4.1 })], 20, 64);
    let (field, _) = synth_field(&s).unwrap();
    let pts = detect_ridges(&field, 0.1, 5).unwrap();
    let tracks = cluster_waves(&pts, 1, 64, &ClusterOptions::new(5.0)).unwrap();
    assert_eq!(tracks[0].len(), pts.len());
}

#[test]
fn unwrapped_displacement_across_seams() {
    for c in [3.0, -3.0] {
        let s = spec(vec![Pulse::gaussian(1.0, 2.0, 30.0, Motion::Constant { speed: c })], 100, 64);
        let (_, truth) = synth_field(&s).unwrap();
        let raw = WaveTrack {
            label: 0,
            points: truth[0].points.clone(),
            unwrapped_x: vec![],
        };
        let u = unwrap_track(&raw, 64.0);
        let disp = u.unwrapped_x[99] - u.unwrapped_x[0];
        assert!((disp - c * 99.0).abs() < 1e-9);
    }
}

fn ring_field(k: usize, rows: usize, centers: &[f64]) -> SpatiotemporalField {
    let s = spec(
        centers
            .iter()
            .enumerate()
            .map(|(i, c)| Pulse::gaussian(1.0 - 0.1 * i as f64, 1.5, *c, Motion::Constant { speed: 1.3 }))
            .collect(),
        rows,
        k,
    );
    synth_field(&s).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ridges_rotate_with_the_field(shift in 0usize..64, a in 0.0f64..64.0, gap in 15.0f64..40.0) {
        let f = ring_field(64, 6, &[a, a + gap]);
        let k = 64;
        let rotated: Vec<f64> = f.rows().flat_map(|r| (0..k).map(move |x| r[(x + k - shift) % k])).collect();
        let g = SpatiotemporalField::new(rotated, 6, k, 1.0).unwrap();
        let p = detect_ridges(&f, 0.1, 3).unwrap();
        let q = detect_ridges(&g, 0.1, 3).unwrap();
        prop_assert_eq!(p.len(), q.len());
        for t in 0..6 {
            let mut want: Vec<f64> = p.iter().filter(|v| v.t_index == t).map(|v| wrap(v.x_index + shift as f64, 64.0)).collect();
            let mut got: Vec<f64> = q.iter().filter(|v| v.t_index == t).map(|v| v.x_index).collect();
            want.sort_by(f64::total_cmp);
            got.sort_by(f64::total_cmp);
            prop_assert_eq!(want.len(), got.len());
            for (w, g) in want.iter().zip(&got) {
                prop_assert!(circ_dist(*w, *g, 64.0) < 1e-9);
            }
        }
    }

    #[test]
    fn clustering_partitions_the_points(a in 0.0f64..128.0, n in 1usize..4, seed in 0u64..50) {
        let f = ring_field(128, 12, &[a, a + 40.0, a + 85.0]);
        let pts = detect_ridges(&f, 0.1, 3).unwrap();
        let opts = ClusterOptions { seed, ..ClusterOptions::new(8.0) };
        let tracks = cluster_waves(&pts, n, 128, &opts).unwrap();
        let mut all: Vec<(usize, u64)> = tracks.iter().flat_map(|t| t.points.iter().map(|p| (p.t_index, p.x_index.to_bits()))).collect();
        let mut want: Vec<(usize, u64)> = pts.iter().map(|p| (p.t_index, p.x_index.to_bits())).collect();
        all.sort();
        want.sort();
        prop_assert_eq!(all, want);
    }

    #[test]
    fn unwrap_then_wrap_is_identity(xs in prop::collection::vec(0.0f64..50.0, 1..60)) {
        let tr = WaveTrack {
            label: 0,
            points: xs.iter().enumerate().map(|(t, x)| PeakPoint { t_index: t, x_index: *x, intensity: 1.0 }).collect(),
            unwrapped_x: vec![],
        };
        let u = unwrap_track(&tr, 50.0);
        for (p, ux) in u.points.iter().zip(&u.unwrapped_x) {
            prop_assert!(circ_dist(wrap(*ux, 50.0), p.x_index, 50.0) < 1e-9);
        }
    }
}
