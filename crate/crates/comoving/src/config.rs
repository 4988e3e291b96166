//! Pipeline configuration: one JSON document naming the input, the output
//! directory, an optional global seed and an ordered list of stages.

use std::path::PathBuf;

use comoving_core::decomposition::RpcaOptions;
use comoving_core::koopman::{KoopmanForecastOptions, ModalKoopmanOptions};
use comoving_core::library::TermKind;
use comoving_core::lotka_volterra::ParamGrid;
use comoving_core::shift::Interpolation;
use comoving_core::sr3::{Lambda, Regularizer, Sr3Options};
use comoving_core::synth::SynthSpec;
use comoving_core::tracking::{ClusterOptions, FollowOptions};
use comoving_core::untwist::{PreprocessOptions, RefineOptions, TrackingParams};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Input {
    /// Field CSV on disk.
    Path(PathBuf),
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Input,
    pub output_dir: PathBuf,
    /// Overrides the synth seed, clustering seeds and network seeds.
    #[serde(default)]
    pub seed: Option<u64>,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum Stage {
    Track(TrackStage),
    UntwistPreprocess(PreprocessStage),
    UntwistRefine(RefineStage),
    Pod(PodStage),
    Rpca(RpcaStage),
    Dmd(DmdStage),
    Oscillator(OscillatorStage),
    Lv(LvStage),
    KoopmanForecast(ForecastStage),
    KoopmanModal(ModalStage),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Track(_) => "track",
            Stage::UntwistPreprocess(_) => "untwist-preprocess",
            Stage::UntwistRefine(_) => "untwist-refine",
            Stage::Pod(_) => "pod",
            Stage::Rpca(_) => "rpca",
            Stage::Dmd(_) => "dmd",
            Stage::Oscillator(_) => "oscillator",
            Stage::Lv(_) => "lv",
            Stage::KoopmanForecast(_) => "koopman-forecast",
            Stage::KoopmanModal(_) => "koopman-modal",
        }
    }
}

/// Which field a decomposition or model stage reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    #[default]
    Input,
    /// Output of `untwist-preprocess`.
    Preprocessed,
    /// Co-moving frame from `untwist-refine`.
    Straightened,
}

/// Which tracks a separation stage reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSource {
    Track,
    Refined,
}

/// Optional sub-selection applied to a field before a stage uses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Window {
    /// Half-open row range; `None` keeps every row.
    pub rows: Option<[usize; 2]>,
    /// Keep every `space_stride`-th column (0 and 1 keep all).
    pub space_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub min_prominence: f64,
    pub min_separation: usize,
    pub kernel_scale: f64,
    pub time_scale: Option<f64>,
    pub restarts: usize,
    pub gate: f64,
    pub history: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        let t = TrackingParams::new(1);
        Self {
            min_prominence: t.min_prominence,
            min_separation: t.min_separation,
            kernel_scale: t.cluster.kernel_scale,
            time_scale: t.cluster.time_scale,
            restarts: t.cluster.restarts,
            gate: t.follow.gate,
            history: t.follow.history,
        }
    }
}

impl TrackingConfig {
    pub fn params(&self, n_waves: usize, seed: u64) -> TrackingParams {
        TrackingParams {
            n_waves,
            min_prominence: self.min_prominence,
            min_separation: self.min_separation,
            cluster: ClusterOptions {
                kernel_scale: self.kernel_scale,
                time_scale: self.time_scale,
                seed,
                restarts: self.restarts,
            },
            follow: FollowOptions {
                gate: self.gate,
                history: self.history,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackStage {
    pub n_waves: usize,
    /// Rows grouped by spectral clustering before gated association.
    pub seed_rows: usize,
    /// Report the eigengap suggestion for the wave count alongside the tracks.
    pub suggest: bool,
    pub tracking: TrackingConfig,
}

impl Default for TrackStage {
    fn default() -> Self {
        Self {
            n_waves: 1,
            seed_rows: 50,
            suggest: false,
            tracking: TrackingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessStage {
    pub n_waves: usize,
    pub window: usize,
    pub tracking: TrackingConfig,
}

impl Default for PreprocessStage {
    fn default() -> Self {
        Self {
            n_waves: 1,
            window: PreprocessOptions::new(1).window,
            tracking: TrackingConfig::default(),
        }
    }
}

impl PreprocessStage {
    pub fn options(&self, seed: u64) -> PreprocessOptions {
        PreprocessOptions {
            window: self.window,
            tracking: self.tracking.params(self.n_waves, seed),
            ..PreprocessOptions::new(self.n_waves)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineStage {
    pub n_waves: usize,
    /// Wave held stationary in the straightened output.
    pub wave: usize,
    pub library: Vec<TermKind>,
    pub lambda: Lambda,
    pub zeta: f64,
    pub regularizer: Regularizer,
    pub max_iter: usize,
    pub tol: f64,
    pub seed_rows: usize,
    pub interpolation: Interpolation,
    pub tracking: TrackingConfig,
}

impl Default for RefineStage {
    fn default() -> Self {
        let r = RefineOptions::new(1);
        Self {
            n_waves: 1,
            wave: 0,
            library: vec![TermKind::Polynomial(2)],
            lambda: r.sr3.lambda,
            zeta: r.sr3.zeta,
            regularizer: r.sr3.regularizer,
            max_iter: r.sr3.max_iter,
            tol: r.sr3.tol,
            seed_rows: r.seed_rows,
            interpolation: r.interpolation,
            tracking: TrackingConfig::default(),
        }
    }
}

impl RefineStage {
    pub fn options(&self, seed: u64) -> RefineOptions {
        RefineOptions {
            tracking: self.tracking.params(self.n_waves, seed),
            seed_rows: self.seed_rows,
            sr3: Sr3Options {
                lambda: self.lambda,
                zeta: self.zeta,
                regularizer: self.regularizer,
                max_iter: self.max_iter,
                tol: self.tol,
            },
            interpolation: self.interpolation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodStage {
    pub source: FieldSource,
    pub window: Window,
    pub rank: usize,
    /// Decompose the low-rank part of a robust PCA instead of the raw field.
    pub rpca: bool,
}

impl Default for PodStage {
    fn default() -> Self {
        Self {
            source: FieldSource::Input,
            window: Window::default(),
            rank: 5,
            rpca: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpcaStage {
    pub source: FieldSource,
    pub window: Window,
    pub options: RpcaOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmdStage {
    pub source: FieldSource,
    pub window: Window,
    pub rank: usize,
    /// Rows used for the fit; the forecast covers the whole window.
    pub train_rows: Option<usize>,
}

impl Default for DmdStage {
    fn default() -> Self {
        Self {
            source: FieldSource::Input,
            window: Window::default(),
            rank: 10,
            train_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorStage {
    pub source: TrackSource,
    pub wave_a: usize,
    pub wave_b: usize,
}

impl Default for OscillatorStage {
    fn default() -> Self {
        Self {
            source: TrackSource::Track,
            wave_a: 0,
            wave_b: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LvStage {
    pub source: TrackSource,
    pub y_wave: usize,
    pub z_wave: usize,
    pub negate_y: bool,
    pub negate_z: bool,
    /// Lower end of the affine map that makes both series positive.
    pub floor: f64,
    pub train_len: usize,
    pub grid: ParamGrid,
}

impl Default for LvStage {
    fn default() -> Self {
        Self {
            source: TrackSource::Refined,
            y_wave: 0,
            z_wave: 1,
            negate_y: true,
            negate_z: false,
            floor: 0.5,
            train_len: 500,
            grid: ParamGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastStage {
    pub source: FieldSource,
    pub window: Window,
    pub options: KoopmanForecastOptions,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModalStage {
    pub source: FieldSource,
    pub window: Window,
    pub options: ModalKoopmanOptions,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> AppResult<Self> {
        serde_json::from_str(text).map_err(|e| AppError::config(e.to_string()))
    }

    /// Pushes the global seed into every seeded component.
    pub fn apply_seed(&mut self) {
        let Some(seed) = self.seed else { return };
        if let Input::Synth(spec) = &mut self.input {
            spec.seed = seed;
        }
        for s in &mut self.stages {
            match s {
                Stage::KoopmanForecast(f) => f.options.seed = seed,
                Stage::KoopmanModal(m) => m.options.seed = seed,
                _ => {}
            }
        }
    }

    /// Clustering seed for tracking stages.
    pub fn cluster_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Checks stage ordering and dependencies, input availability and wave
    /// indices without running anything.
    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: String| Err(AppError::config(m));
        match &self.input {
            Input::Path(p) => {
                if !p.is_file() {
                    return bad(format!("input file {} does not exist", p.display()));
                }
            }
            Input::Synth(spec) => spec.validate()?,
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        let mut seen: Vec<&'static str> = Vec::new();
        let mut track_waves = None;
        let mut refine_waves = None;
        for (i, stage) in self.stages.iter().enumerate() {
            let name = stage.name();
            if seen.contains(&name) {
                return bad(format!("stage {i}: '{name}' appears twice"));
            }
            let need = |dep: &str| -> AppResult<()> {
                if seen.contains(&dep) {
                    Ok(())
                } else {
                    Err(AppError::config(format!("stage {i}: '{name}' requires an earlier '{dep}' stage")))
                }
            };
            let need_field = |src: FieldSource| match src {
                FieldSource::Input => Ok(()),
                FieldSource::Preprocessed => need("untwist-preprocess"),
                FieldSource::Straightened => need("untwist-refine"),
            };
            let need_tracks = |src: TrackSource| match src {
                TrackSource::Track => need("track").map(|_| track_waves.unwrap_or(0)),
                TrackSource::Refined => need("untwist-refine").map(|_| refine_waves.unwrap_or(0)),
            };
            let check_wave = |w: usize, n: usize, what: &str| -> AppResult<()> {
                if w >= n {
                    Err(AppError::config(format!("stage {i}: {what}={w} but only {n} waves are tracked")))
                } else {
                    Ok(())
                }
            };
            match stage {
                Stage::Track(t) => {
                    if t.n_waves == 0 {
                        return bad(format!("stage {i}: n_waves must be >= 1"));
                    }
                    track_waves = Some(t.n_waves);
                }
                Stage::UntwistPreprocess(p) => {
                    if p.n_waves == 0 {
                        return bad(format!("stage {i}: n_waves must be >= 1"));
                    }
                }
                Stage::UntwistRefine(r) => {
                    need("untwist-preprocess")?;
                    check_wave(r.wave, r.n_waves, "wave")?;
                    if r.library.is_empty() {
                        return bad(format!("stage {i}: library is empty"));
                    }
                    refine_waves = Some(r.n_waves);
                }
                Stage::Pod(p) => {
                    need_field(p.source)?;
                    if p.rank == 0 {
                        return bad(format!("stage {i}: rank must be >= 1"));
                    }
                }
                Stage::Rpca(r) => need_field(r.source)?,
                Stage::Dmd(d) => {
                    need_field(d.source)?;
                    if d.rank == 0 {
                        return bad(format!("stage {i}: rank must be >= 1"));
                    }
                }
                Stage::Oscillator(o) => {
                    let n = need_tracks(o.source)?;
                    check_wave(o.wave_a, n, "wave_a")?;
                    check_wave(o.wave_b, n, "wave_b")?;
                    if o.wave_a == o.wave_b {
                        return bad(format!("stage {i}: wave_a and wave_b must differ"));
                    }
                }
                Stage::Lv(l) => {
                    let n = need_tracks(l.source)?;
                    check_wave(l.y_wave, n, "y_wave")?;
                    check_wave(l.z_wave, n, "z_wave")?;
                    if l.y_wave == l.z_wave {
                        return bad(format!("stage {i}: y_wave and z_wave must differ"));
                    }
                    if !(l.floor > 0.0) {
                        return bad(format!("stage {i}: floor must be > 0"));
                    }
                }
                Stage::KoopmanForecast(f) => need_field(f.source)?,
                Stage::KoopmanModal(m) => need_field(m.source)?,
            }
            seen.push(name);
        }
        Ok(())
    }
}
