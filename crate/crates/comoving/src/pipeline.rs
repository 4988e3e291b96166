//! Sequential stage runner. Each stage writes into `<out>/<NN>-<stage>/`
//! and the run ends with `<out>/manifest.json`, which lists every artifact
//! with its SHA-256. A failing stage leaves its partial outputs in place,
//! marks the manifest as failed and writes `<out>/FAILED`.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use comoving_core::decomposition::{pod, rpca};
use comoving_core::dmd::{dmd_forecast, exact_dmd};
use comoving_core::koopman::{decompose_modes, fit_koopman_forecast, fit_modal_koopman};
use comoving_core::library::build_library;
use comoving_core::lotka_volterra::{lv_fit_sweep, lv_simulate, to_positive};
use comoving_core::oscillator::{fit_oscillator, separation_series};
use comoving_core::synth::synth_field;
use comoving_core::tracking::{detect_ridges, suggest_n_waves, WaveTrack};
use comoving_core::untwist::{preprocess_shift, refine_models, track_waves, Preprocessed, Refined};
use comoving_core::shift::{shift_field, ShiftSpec};
use comoving_core::SpatiotemporalField;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    DmdStage, FieldSource, ForecastStage, Input, LvStage, ModalStage, OscillatorStage, PipelineConfig, PodStage,
    PreprocessStage, RefineStage, RpcaStage, Stage, TrackSource, TrackStage, Window,
};
use crate::error::{AppError, AppResult};
use crate::io::{field_to_csv, load_field, modes_to_csv, table_to_csv, to_json, tracks_to_csv, write_bytes};
use crate::plot::{heatmap_svg, line_plot_svg, Series};
use crate::report::{
    DmdReport, ForecastModelFile, LvReport, ModalModelFile, OscillatorReport, PodReport, RpcaReport, SeriesMap,
    SpeedModelReport,
};

pub const MANIFEST: &str = "manifest.json";
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub stage: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub stage: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub seed: Option<u64>,
    pub stages: Vec<StageRecord>,
    pub failure: Option<Failure>,
}

impl Manifest {
    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.stages.iter().flat_map(|s| s.artifacts.iter())
    }
}

#[derive(Debug)]
pub struct PipelineRun {
    pub manifest: Manifest,
    /// Wall time per stage; kept out of the manifest so that it stays reproducible.
    pub timings: Vec<(String, Duration)>,
    pub error: Option<AppError>,
}

impl PipelineRun {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, AppError::exit_code)
    }
}

struct Writer<'a> {
    root: &'a Path,
    dir: String,
    artifacts: Vec<Artifact>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, kind: &str, bytes: &[u8]) -> AppResult<()> {
        let rel = format!("{}/{name}", self.dir);
        write_bytes(&self.root.join(&rel), bytes)?;
        self.artifacts.push(Artifact {
            path: rel,
            kind: kind.into(),
            sha256: format!("{:x}", Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn field(&mut self, name: &str, f: &SpatiotemporalField) -> AppResult<()> {
        self.put(name, "field-csv", field_to_csv(f).as_bytes())
    }

    fn tracks(&mut self, name: &str, t: &[WaveTrack]) -> AppResult<()> {
        self.put(name, "track-csv", tracks_to_csv(t).as_bytes())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> AppResult<()> {
        self.put(name, "json", to_json(v).as_bytes())
    }

    fn table(&mut self, name: &str, headers: &[&str], cols: &[Vec<f64>]) -> AppResult<()> {
        self.put(name, "table-csv", table_to_csv(headers, cols).as_bytes())
    }

    fn svg(&mut self, name: &str, svg: String) -> AppResult<()> {
        self.put(name, "svg", svg.as_bytes())
    }
}

struct RefineState {
    refined: Refined,
    /// Offsets that hold the chosen wave still, relative to the preprocessed frame.
    local_offsets: Vec<f64>,
    straightened: SpatiotemporalField,
}

struct Context {
    input: SpatiotemporalField,
    tracks: Option<Vec<WaveTrack>>,
    preprocessed: Option<Preprocessed>,
    refine: Option<RefineState>,
    cluster_seed: u64,
}

impl Context {
    fn field(&self, src: FieldSource) -> AppResult<&SpatiotemporalField> {
        let missing = |s: &str| AppError::config(format!("no {s} field available"));
        match src {
            FieldSource::Input => Ok(&self.input),
            FieldSource::Preprocessed => self.preprocessed.as_ref().map(|p| &p.field).ok_or_else(|| missing("preprocessed")),
            FieldSource::Straightened => self.refine.as_ref().map(|r| &r.straightened).ok_or_else(|| missing("straightened")),
        }
    }

    fn tracks(&self, src: TrackSource) -> AppResult<&[WaveTrack]> {
        match src {
            TrackSource::Track => self.tracks.as_deref(),
            TrackSource::Refined => self.refine.as_ref().map(|r| r.refined.tracks.as_slice()),
        }
        .ok_or_else(|| AppError::config("requested tracks are not available"))
    }
}

/// Row range and column stride selection.
pub fn apply_window(field: &SpatiotemporalField, w: &Window) -> AppResult<SpatiotemporalField> {
    let f = match w.rows {
        Some([a, b]) => field.time_slice(a, b)?,
        None => field.clone(),
    };
    if w.space_stride <= 1 {
        return Ok(f);
    }
    let cols: Vec<usize> = (0..f.n_space()).step_by(w.space_stride).collect();
    let v = f.rows().flat_map(|r| cols.iter().map(move |&c| r[c])).collect();
    Ok(SpatiotemporalField::new(v, f.n_time(), cols.len(), f.dt())?)
}

/// Fills gaps in a sampled series by linear interpolation between the
/// neighbouring samples. `t` must be strictly increasing.
pub fn densify(t: &[usize], v: &[f64]) -> (usize, Vec<f64>) {
    let Some(&t0) = t.first() else { return (0, Vec::new()) };
    let mut out = Vec::with_capacity(t.last().unwrap() - t0 + 1);
    for i in 0..t.len() {
        out.push(v[i]);
        if let Some(&next) = t.get(i + 1) {
            let gap = next - t[i];
            for j in 1..gap {
                out.push(v[i] + (v[i + 1] - v[i]) * j as f64 / gap as f64);
            }
        }
    }
    (t0, out)
}

fn track_series(track: &WaveTrack, frame: Option<&[f64]>) -> (usize, Vec<f64>) {
    let t: Vec<usize> = track.times().collect();
    let v: Vec<f64> = t
        .iter()
        .zip(&track.unwrapped_x)
        .map(|(t, x)| x - frame.map_or(0.0, |f| f[*t]))
        .collect();
    densify(&t, &v)
}

fn range_f64(a: usize, n: usize) -> Vec<f64> {
    (a..a + n).map(|v| v as f64).collect()
}

fn plot_tracks(title: &str, tracks: &[WaveTrack]) -> String {
    let series: Vec<Series> = tracks
        .iter()
        .map(|t| {
            Series::line(
                format!("wave {}", t.label),
                t.points.iter().map(|p| p.t_index as f64).collect(),
                t.unwrapped_x.clone(),
            )
            .scatter()
        })
        .collect();
    line_plot_svg(title, "t (row)", "unwrapped x (px)", &series)
}

fn run_input(cfg: &PipelineConfig, w: &mut Writer) -> AppResult<SpatiotemporalField> {
    match &cfg.input {
        Input::Path(p) => {
            let f = load_field(p)?;
            w.field("field.csv", &f)?;
            w.svg("field.svg", heatmap_svg(&f, "input field"))?;
            Ok(f)
        }
        Input::Synth(spec) => {
            let (f, truth) = synth_field(spec)?;
            w.json("synth_spec.json", spec)?;
            w.field("field.csv", &f)?;
            w.tracks("truth_tracks.csv", &truth)?;
            w.svg("field.svg", heatmap_svg(&f, "synthetic field"))?;
            Ok(f)
        }
    }
}

#[derive(Serialize)]
struct TrackSummary {
    n_waves: usize,
    points_per_wave: Vec<usize>,
    suggested_n_waves: Option<usize>,
}

fn run_track(s: &TrackStage, ctx: &mut Context, w: &mut Writer) -> AppResult<()> {
    let params = s.tracking.params(s.n_waves, ctx.cluster_seed);
    let tracks = track_waves(&ctx.input, &params, s.seed_rows)?;
    let suggested = if s.suggest {
        let pts = detect_ridges(&ctx.input, params.min_prominence, params.min_separation)?;
        let head: Vec<_> = pts.into_iter().filter(|p| p.t_index < s.seed_rows).collect();
        Some(suggest_n_waves(&head, ctx.input.n_space(), &params.cluster, (2 * s.n_waves).max(4))?)
    } else {
        None
    };
    w.tracks("tracks.csv", &tracks)?;
    w.json(
        "tracks.json",
        &TrackSummary {
            n_waves: tracks.len(),
            points_per_wave: tracks.iter().map(WaveTrack::len).collect(),
            suggested_n_waves: suggested,
        },
    )?;
    w.svg("tracks.svg", plot_tracks("wave tracks", &tracks))?;
    ctx.tracks = Some(tracks);
    Ok(())
}

#[derive(Serialize)]
struct PreprocessSummary {
    mean_speed: f64,
    window: usize,
    model: SpeedModelReport,
}

fn run_preprocess(s: &PreprocessStage, ctx: &mut Context, w: &mut Writer) -> AppResult<()> {
    let pre = preprocess_shift(&ctx.input, &s.options(ctx.cluster_seed))?;
    w.field("preprocessed.csv", &pre.field)?;
    w.tracks("window_tracks.csv", &pre.tracks)?;
    w.json(
        "preprocess.json",
        &PreprocessSummary {
            mean_speed: pre.mean_speed,
            window: s.window,
            model: SpeedModelReport::new(&pre.model, &comoving_core::library::FunctionLibrary::linear()),
        },
    )?;
    w.svg("preprocessed.svg", heatmap_svg(&pre.field, "preprocessed field"))?;
    ctx.preprocessed = Some(pre);
    Ok(())
}

fn run_refine(s: &RefineStage, ctx: &mut Context, w: &mut Writer) -> AppResult<()> {
    let pre = ctx
        .preprocessed
        .as_ref()
        .ok_or_else(|| AppError::config("untwist-refine needs untwist-preprocess"))?;
    let library = build_library(&s.library)?;
    let refined = refine_models(&pre.field, &library, &s.options(ctx.cluster_seed))?;
    let n = ctx.input.n_time();
    let local = refined.offsets(s.wave, n, ctx.input.dt())?;
    let total: Vec<f64> = pre.offsets.iter().zip(&local).map(|(a, b)| a + b).collect();
    // one interpolation from the original data
    let straightened = shift_field(
        &ctx.input,
        &ShiftSpec {
            offsets: total.clone(),
            interpolation: s.interpolation,
        },
    )?;
    w.tracks("refined_tracks.csv", &refined.tracks)?;
    w.json("speed_model.json", &SpeedModelReport::new(&refined.model, &library))?;
    let t = range_f64(0, n);
    w.table("offsets.csv", &["t", "preprocess", "refine", "total"], &[t.clone(), pre.offsets.clone(), local.clone(), total])?;
    w.field("straightened.csv", &straightened)?;
    w.svg("straightened.svg", heatmap_svg(&straightened, &format!("co-moving frame of wave {}", s.wave)))?;
    let mut series: Vec<Series> = Vec::new();
    for (wv, tr) in refined.tracks.iter().enumerate() {
        series.push(
            Series::line(
                format!("wave {} data", tr.label),
                tr.points.iter().map(|p| p.t_index as f64).collect(),
                tr.unwrapped_x.clone(),
            )
            .scatter(),
        );
        let model: Vec<f64> = (0..n).map(|r| refined.model.position(&library, wv, r as f64 * ctx.input.dt())).collect();
        series.push(Series::line(format!("wave {wv} model"), t.clone(), model).dashed());
    }
    w.svg("speed_model.svg", line_plot_svg("fitted positions (preprocessed frame)", "t (row)", "x (px)", &series))?;
    ctx.refine = Some(RefineState {
        refined,
        local_offsets: local,
        straightened,
    });
    Ok(())
}

fn run_pod(s: &PodStage, ctx: &Context, w: &mut Writer) -> AppResult<()> {
    let mut f = apply_window(ctx.field(s.source)?, &s.window)?;
    if s.rpca {
        f = rpca(&f, &Default::default())?.low_rank;
    }
    let rank = s.rank.min(f.n_time().min(f.n_space()));
    let d = pod(&f, rank)?;
    w.put("modes.csv", "mode-csv", modes_to_csv(&d.modes).as_bytes())?;
    let coeffs = d.time_coeffs.transpose();
    w.put("time_coeffs.csv", "mode-csv", modes_to_csv(&coeffs).as_bytes())?;
    let energy: Vec<f64> = (0..rank).map(|i| d.energy_fraction(i)).collect();
    w.json(
        "pod.json",
        &PodReport {
            rank,
            singular_values: d.singular_values.clone(),
            energy_fractions: energy.clone(),
            total_energy: d.total_energy,
        },
    )?;
    w.svg(
        "energy.svg",
        line_plot_svg("POD energy fractions", "mode", "energy fraction", &[Series::line("energy", range_f64(0, rank), energy).scatter()]),
    )?;
    let x = range_f64(0, f.n_space());
    let series: Vec<Series> = (0..rank.min(3))
        .map(|i| Series::line(format!("mode {i}"), x.clone(), d.modes.column(i).iter().copied().collect()))
        .collect();
    w.svg("modes.svg", line_plot_svg("leading POD modes", "x (px)", "amplitude", &series))
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    sv.iter().filter(|v| **v > 1e-9 * top).count()
}

fn run_rpca(s: &RpcaStage, ctx: &Context, w: &mut Writer) -> AppResult<()> {
    let f = apply_window(ctx.field(s.source)?, &s.window)?;
    let r = rpca(&f, &s.options)?;
    let nz = r.sparse.values().iter().filter(|v| **v != 0.0).count();
    w.field("low_rank.csv", &r.low_rank)?;
    w.field("sparse.csv", &r.sparse)?;
    let first = r.first_mode();
    w.table("first_mode.csv", &["x", "mode_0"], &[range_f64(0, first.len()), first.clone()])?;
    w.json(
        "rpca.json",
        &RpcaReport {
            iterations: r.iterations,
            converged: r.converged,
            residual: r.residual,
            low_rank_rank: numerical_rank(&r.low_rank.snapshot_matrix()),
            sparse_fraction: nz as f64 / r.sparse.values().len() as f64,
        },
    )?;
    w.svg("low_rank.svg", heatmap_svg(&r.low_rank, "RPCA low-rank part"))?;
    w.svg("sparse.svg", heatmap_svg(&r.sparse, "RPCA sparse part"))
}

fn run_dmd(s: &DmdStage, ctx: &Context, w: &mut Writer) -> AppResult<()> {
    let f = apply_window(ctx.field(s.source)?, &s.window)?;
    let n = f.n_time();
    let train = s.train_rows.unwrap_or(n).clamp(2, n);
    let x = f.snapshot_matrix();
    let xt = x.columns(0, train).into_owned();
    let rank = s.rank.min(f.n_space().min(train - 1));
    let model = exact_dmd(&xt, rank, f.dt())?;
    let pred = dmd_forecast(&model, n - 1);
    let fit_err = (pred.columns(0, train) - &xt).norm() / xt.norm();
    let forecast = SpatiotemporalField::from_snapshots(&pred, f.dt())?;
    w.json("dmd.json", &DmdReport::new(&model, fit_err))?;
    w.field("forecast.csv", &forecast)?;
    let re = model.modes.map(|c| c.re);
    let im = model.modes.map(|c| c.im);
    w.put("modes_re.csv", "mode-csv", modes_to_csv(&re).as_bytes())?;
    w.put("modes_im.csv", "mode-csv", modes_to_csv(&im).as_bytes())?;
    let ev = &model.eigenvalues;
    w.table(
        "eigenvalues.csv",
        &["re", "im", "modulus"],
        &[ev.iter().map(|l| l.re).collect(), ev.iter().map(|l| l.im).collect(), ev.iter().map(|l| l.norm()).collect()],
    )?;
    w.svg("forecast.svg", heatmap_svg(&forecast, "DMD reconstruction and forecast"))?;
    let circle: Vec<f64> = (0..=128).map(|i| i as f64 * std::f64::consts::TAU / 128.0).collect();
    w.svg(
        "eigenvalues.svg",
        line_plot_svg(
            "DMD eigenvalues",
            "Re",
            "Im",
            &[
                Series::line("unit circle", circle.iter().map(|a| a.cos()).collect(), circle.iter().map(|a| a.sin()).collect()).dashed(),
                Series::line("eigenvalues", ev.iter().map(|l| l.re).collect(), ev.iter().map(|l| l.im).collect()).scatter(),
            ],
        ),
    )
}

fn run_oscillator(s: &OscillatorStage, ctx: &Context, w: &mut Writer) -> AppResult<()> {
    let tracks = ctx.tracks(s.source)?;
    let (t, v) = separation_series(&tracks[s.wave_a], &tracks[s.wave_b], ctx.input.n_space() as f64)?;
    let (t0, x) = densify(&t, &v);
    let fit = fit_oscillator(&x, ctx.input.dt())?;
    let pred = fit.predict(x.len(), ctx.input.dt());
    let tt = range_f64(t0, x.len());
    w.json(
        "oscillator.json",
        &OscillatorReport {
            wave_a: s.wave_a,
            wave_b: s.wave_b,
            t_start: t0,
            samples: x.len(),
            fit,
            convention: "separation of unwrapped positions (b minus a, short arc at the first common row), de-meaned; time measured from t_start".into(),
        },
    )?;
    w.table("prediction.csv", &["t", "separation", "model"], &[tt.clone(), x.clone(), pred.clone()])?;
    w.svg(
        "prediction.svg",
        line_plot_svg(
            "wave separation and oscillator fit",
            "t (row)",
            "separation (px)",
            &[Series::line("data", tt.clone(), x), Series::line("model", tt, pred).dashed()],
        ),
    )
}

fn run_lv(s: &LvStage, ctx: &Context, w: &mut Writer) -> AppResult<()> {
    let tracks = ctx.tracks(s.source)?;
    let frame = match s.source {
        TrackSource::Refined => ctx.refine.as_ref().map(|r| r.local_offsets.as_slice()),
        TrackSource::Track => None,
    };
    let (ty, y) = track_series(&tracks[s.y_wave], frame);
    let (tz, z) = track_series(&tracks[s.z_wave], frame);
    let start = ty.max(tz);
    let end = (ty + y.len()).min(tz + z.len());
    if end < start + 2 {
        return Err(AppError::Model(comoving_core::Error::TooFewPoints {
            needed: 2,
            found: end.saturating_sub(start),
        }));
    }
    let y = &y[start - ty..end - ty];
    let z = &z[start - tz..end - tz];
    let (yp, ym) = to_positive(y, s.negate_y, s.floor)?;
    let (zp, zm) = to_positive(z, s.negate_z, s.floor)?;
    let h = ctx.input.dt();
    let train = s.train_len.min(yp.len());
    let fit = lv_fit_sweep(&yp, &zp, train, &s.grid, h)?;
    let sim = lv_simulate(&fit.params, yp[0], zp[0], yp.len() - 1, h)?;
    let map = |wave, negated, m: (f64, f64, f64)| SeriesMap {
        wave,
        negated,
        shift: m.1,
        scale: m.2,
        floor: s.floor,
    };
    w.json(
        "lv.json",
        &LvReport {
            fit,
            train_len: train,
            samples: yp.len(),
            h,
            y: map(s.y_wave, s.negate_y, ym),
            z: map(s.z_wave, s.negate_z, zm),
            convention: "positions in the chosen frame, optionally negated, mapped affinely onto [floor, floor + 1]; time measured from the first common row".into(),
        },
    )?;
    let t = range_f64(start, yp.len());
    w.table("extrapolation.csv", &["t", "y", "z", "y_model", "z_model"], &[t.clone(), yp.clone(), zp.clone(), sim.y.clone(), sim.z.clone()])?;
    w.svg(
        "extrapolation.svg",
        line_plot_svg(
            &format!("Lotka-Volterra fit (train {train} of {} rows)", yp.len()),
            "t (row)",
            "mapped position",
            &[
                Series::line("y", t.clone(), yp),
                Series::line("z", t.clone(), zp),
                Series::line("y model", t.clone(), sim.y).dashed(),
                Series::line("z model", t, sim.z).dashed(),
            ],
        ),
    )
}

fn loss_curve(w: &mut Writer, history: &[f64]) -> AppResult<()> {
    let e = range_f64(0, history.len());
    w.table("training_curve.csv", &["epoch", "loss"], &[e.clone(), history.to_vec()])?;
    w.svg("training_curve.svg", line_plot_svg("training loss", "epoch", "loss", &[Series::line("loss", e, history.to_vec())]))
}

fn run_forecast(s: &ForecastStage, ctx: &Context, w: &mut Writer) -> AppResult<()> {
    let f = apply_window(ctx.field(s.source)?, &s.window)?;
    let model = fit_koopman_forecast(&f, &s.options)?;
    let pred = model.forecast(0..f.n_time())?;
    w.json("model.json", &ForecastModelFile::new(&model))?;
    w.field("forecast.csv", &pred)?;
    w.svg("forecast.svg", heatmap_svg(&pred, &format!("Koopman forecast (train rows 0..{})", model.train_len)))?;
    loss_curve(w, &model.loss_history)
}

fn run_modal(s: &ModalStage, ctx: &Context, w: &mut Writer) -> AppResult<()> {
    let f = apply_window(ctx.field(s.source)?, &s.window)?;
    let model = fit_modal_koopman(&f, &s.options)?;
    let (modes, aggregate) = decompose_modes(&model, 0..f.n_time())?;
    w.json("model.json", &ModalModelFile::new(&model))?;
    w.field("aggregate.csv", &aggregate)?;
    w.svg("aggregate.svg", heatmap_svg(&aggregate, "modal Koopman aggregate"))?;
    for (i, m) in modes.iter().enumerate() {
        w.field(&format!("mode_{i}.csv"), m)?;
        w.svg(
            &format!("mode_{i}.svg"),
            heatmap_svg(m, &format!("mode {i}, speed {:.4} px/step", model.speeds[i])),
        )?;
    }
    loss_curve(w, &model.loss_history)
}

fn run_stage(stage: &Stage, ctx: &mut Context, w: &mut Writer) -> AppResult<()> {
    match stage {
        Stage::Track(s) => run_track(s, ctx, w),
        Stage::UntwistPreprocess(s) => run_preprocess(s, ctx, w),
        Stage::UntwistRefine(s) => run_refine(s, ctx, w),
        Stage::Pod(s) => run_pod(s, ctx, w),
        Stage::Rpca(s) => run_rpca(s, ctx, w),
        Stage::Dmd(s) => run_dmd(s, ctx, w),
        Stage::Oscillator(s) => run_oscillator(s, ctx, w),
        Stage::Lv(s) => run_lv(s, ctx, w),
        Stage::KoopmanForecast(s) => run_forecast(s, ctx, w),
        Stage::KoopmanModal(s) => run_modal(s, ctx, w),
    }
}

fn remove_if_present(path: &Path) -> AppResult<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(AppError::io(path, e)),
        _ => Ok(()),
    }
}

/// Validates `config` (after applying its seed) and runs every stage.
///
/// Configuration errors are returned directly; once stages start, the
/// outcome, including any failure, is reported through [`PipelineRun`].
pub fn run_pipeline(config: &PipelineConfig) -> AppResult<PipelineRun> {
    let mut cfg = config.clone();
    cfg.apply_seed();
    cfg.validate()?;
    let root = cfg.output_dir.as_path();
    fs::create_dir_all(root).map_err(|e| AppError::io(root, e))?;
    remove_if_present(&root.join(MANIFEST))?;
    remove_if_present(&root.join(FAILURE_MARKER))?;

    let mut manifest = Manifest {
        status: "complete".into(),
        seed: cfg.seed,
        stages: Vec::new(),
        failure: None,
    };
    let mut timings = Vec::new();
    let mut error = None;

    let mut w = Writer {
        root,
        dir: "00-input".into(),
        artifacts: Vec::new(),
    };
    let started = Instant::now();
    let input = run_input(&cfg, &mut w);
    timings.push(("input".to_string(), started.elapsed()));
    manifest.stages.push(StageRecord {
        index: 0,
        stage: "input".into(),
        artifacts: w.artifacts,
    });
    let mut ctx = match input {
        Ok(field) => Some(Context {
            input: field,
            tracks: None,
            preprocessed: None,
            refine: None,
            cluster_seed: cfg.cluster_seed(),
        }),
        Err(e) => {
            error = Some((0, "input".to_string(), e));
            None
        }
    };
    if let Some(ctx) = ctx.as_mut() {
        for (i, stage) in cfg.stages.iter().enumerate() {
            let index = i + 1;
            let mut w = Writer {
                root,
                dir: format!("{index:02}-{}", stage.name()),
                artifacts: Vec::new(),
            };
            let started = Instant::now();
            let result = run_stage(stage, ctx, &mut w);
            timings.push((stage.name().to_string(), started.elapsed()));
            manifest.stages.push(StageRecord {
                index,
                stage: stage.name().into(),
                artifacts: w.artifacts,
            });
            if let Err(e) = result {
                error = Some((index, stage.name().to_string(), e));
                break;
            }
        }
    }
    let error = error.map(|(index, stage, cause)| {
        let failure = Failure {
            index,
            stage: stage.clone(),
            exit_code: cause.exit_code(),
            message: cause.to_string(),
        };
        manifest.status = "failed".into();
        manifest.failure = Some(failure);
        AppError::Stage {
            stage,
            source: Box::new(cause),
        }
    });
    if let Some(f) = &manifest.failure {
        write_bytes(&root.join(FAILURE_MARKER), to_json(f).as_bytes())?;
    }
    write_bytes(&root.join(MANIFEST), to_json(&manifest).as_bytes())?;
    Ok(PipelineRun {
        manifest,
        timings,
        error,
    })
}
