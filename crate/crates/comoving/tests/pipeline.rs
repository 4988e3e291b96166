use std::fs;
use std::path::Path;

use comoving::config::PipelineConfig;
use comoving::io::{load_field, load_tracks};
use comoving::pipeline::{run_pipeline, Manifest, FAILURE_MARKER, MANIFEST};

fn config(out: &Path, stages: &str, pulses: &str) -> PipelineConfig {
    let text = format!(
        r#"{{
            "input": {{"synth": {{"n_time": 120, "n_space": 60, "noise_sigma": 0.01, "pulses": {pulses}}}}},
            "output_dir": {out:?},
            "seed": 5,
            "stages": {stages}
        }}"#
    );
    PipelineConfig::from_json(&text).unwrap()
}

const ONE_PULSE: &str = r#"[{"shape": "gaussian", "amplitude": 1, "width": 2, "position": 10, "motion": {"kind": "constant", "speed": 1.5}}]"#;

const UNTWIST: &str = r#"[
    {"stage": "track", "n_waves": 1},
    {"stage": "untwist-preprocess", "n_waves": 1},
    {"stage": "untwist-refine", "n_waves": 1}
]"#;

#[test]
fn untwist_run_lists_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(&config(dir.path(), UNTWIST, ONE_PULSE)).unwrap();
    assert!(run.error.is_none(), "{:?}", run.error);
    assert_eq!(run.exit_code(), 0);
    let m = &run.manifest;
    assert_eq!(m.status, "complete");
    let paths: Vec<&str> = m.artifacts().map(|a| a.path.as_str()).collect();
    for want in [
        "00-input/field.csv",
        "00-input/field.svg",
        "01-track/tracks.csv",
        "03-untwist-refine/speed_model.json",
        "03-untwist-refine/straightened.csv",
        "03-untwist-refine/straightened.svg",
    ] {
        assert!(paths.contains(&want), "missing {want} in {paths:?}");
    }
    let on_disk: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(&on_disk, m);
    assert!(!dir.path().join(FAILURE_MARKER).exists());

    // straightened pulse sits still
    let s = load_field(&dir.path().join("03-untwist-refine/straightened.csv")).unwrap();
    let am = s.row_argmax();
    assert!(am.iter().all(|a| a.abs_diff(am[0]) <= 1), "{am:?}");
}

#[test]
fn every_numeric_artifact_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let stages = r#"[
        {"stage": "track", "n_waves": 2},
        {"stage": "untwist-preprocess", "n_waves": 2},
        {"stage": "untwist-refine", "n_waves": 2},
        {"stage": "pod", "source": "straightened", "rank": 3},
        {"stage": "rpca", "window": {"rows": [0, 40]}},
        {"stage": "dmd", "rank": 6, "train_rows": 100},
        {"stage": "oscillator", "source": "refined"},
        {"stage": "lv", "train_len": 60, "grid": {"alpha": {"start": 0.05, "stop": 0.1, "step": 0.05}, "beta": {"start": 0.05, "stop": 0.1, "step": 0.05}, "delta": {"start": 0.05, "stop": 0.1, "step": 0.05}, "gamma": {"start": 0.05, "stop": 0.1, "step": 0.05}}},
        {"stage": "koopman-forecast", "window": {"rows": [0, 35]}, "options": {"rounds": 1, "hidden": [4], "schedule": {"epochs": 10}}},
        {"stage": "koopman-modal", "window": {"rows": [0, 10], "space_stride": 2}, "options": {"rounds": 1, "hidden": [4], "schedule": {"epochs": 5}}}
    ]"#;
    let two = r#"[
        {"shape": "gaussian", "amplitude": 1, "width": 2, "position": 5, "motion": {"kind": "constant", "speed": 1.0}},
        {"shape": "gaussian", "amplitude": 0.7, "width": 2, "position": 35, "motion": {"kind": "damped_oscillation", "speed": 1.0, "amplitude": 3, "growth": 0.0, "frequency": 0.2}}
    ]"#;
    let run = run_pipeline(&config(dir.path(), stages, two)).unwrap();
    assert!(run.error.is_none(), "{:?}", run.error);
    assert_eq!(run.manifest.stages.len(), 11);
    for a in run.manifest.artifacts() {
        let p = dir.path().join(&a.path);
        match a.kind.as_str() {
            "field-csv" => {
                load_field(&p).unwrap();
            }
            "track-csv" => {
                load_tracks(&p).unwrap();
            }
            "json" => {
                serde_json::from_str::<serde_json::Value>(&fs::read_to_string(&p).unwrap()).unwrap();
            }
            "table-csv" | "mode-csv" => {
                let mut r = csv::Reader::from_path(&p).unwrap();
                let width = r.headers().unwrap().len();
                for rec in r.records() {
                    let rec = rec.unwrap();
                    assert_eq!(rec.len(), width);
                    assert!(rec.iter().all(|c| c.parse::<f64>().is_ok()), "{}", a.path);
                }
            }
            "svg" => assert!(fs::read_to_string(&p).unwrap().starts_with("<svg")),
            other => panic!("unknown kind {other}"),
        }
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_same_bytes() {
    let stages = r#"[
        {"stage": "track", "n_waves": 1},
        {"stage": "koopman-forecast", "window": {"rows": [0, 35]}, "options": {"rounds": 1, "hidden": [4], "schedule": {"epochs": 10}}}
    ]"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_pipeline(&config(a.path(), stages, ONE_PULSE)).unwrap();
    let rb = run_pipeline(&config(b.path(), stages, ONE_PULSE)).unwrap();
    assert_eq!(ra.manifest, rb.manifest);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.len(), sb.len());
    for (x, y) in sa.iter().zip(&sb) {
        assert_eq!(x.0, y.0);
        assert!(x.1 == y.1, "{} differs", x.0);
    }
    // a different seed changes the noise
    let c = tempfile::tempdir().unwrap();
    let mut cfg = config(c.path(), stages, ONE_PULSE);
    cfg.seed = Some(6);
    let rc = run_pipeline(&cfg).unwrap();
    assert_ne!(rc.manifest.stages[0].artifacts, ra.manifest.stages[0].artifacts);
}

#[test]
fn failing_stage_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // no pulses: the field is pure noise at 0.01, below the prominence threshold
    let stages = r#"[{"stage": "pod", "rank": 2}, {"stage": "track", "n_waves": 1}, {"stage": "dmd"}]"#;
    let run = run_pipeline(&config(dir.path(), stages, "[]")).unwrap();
    let err = run.error.as_ref().expect("track must fail");
    assert_eq!(run.exit_code(), 6, "{err}");
    assert!(err.to_string().contains("track"));
    let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(m.status, "failed");
    let f = m.failure.as_ref().unwrap();
    assert_eq!((f.index, f.stage.as_str()), (2, "track"));
    assert_eq!(m.stages.len(), 3, "dmd must not run");
    assert!(dir.path().join(FAILURE_MARKER).exists());
    assert!(dir.path().join("01-pod/modes.csv").exists());

    // a clean rerun into the same directory clears the marker
    let ok = run_pipeline(&config(dir.path(), r#"[{"stage": "pod", "rank": 2}]"#, "[]")).unwrap();
    assert!(ok.error.is_none());
    assert!(!dir.path().join(FAILURE_MARKER).exists());
}

#[test]
fn invalid_config_runs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let e = run_pipeline(&config(&out, r#"[{"stage": "untwist-refine"}]"#, ONE_PULSE)).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    assert!(!out.exists());
}
