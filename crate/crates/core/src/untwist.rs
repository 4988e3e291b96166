//! Two-stage discovery of co-moving frames.
//!
//! The preprocessing stage looks at a short leading window, fits a linear
//! speed per wave and removes their mean speed from the whole record. The
//! refining stage re-detects fronts on the preprocessed record, fits each
//! wave over a richer library and shifts so that one chosen wave is
//! stationary.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::field::SpatiotemporalField;
use crate::library::FunctionLibrary;
use crate::shift::{shift_field, Interpolation, ShiftSpec};
use crate::sr3::{fit_sr3, Lambda, Regularizer, SpeedModel, Sr3Options};
use crate::tracking::{
    cluster_waves, detect_ridges, follow_tracks, ClusterOptions, FollowOptions, WaveTrack,
};

/// Front detection and grouping parameters shared by both stages.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrackingParams {
    pub n_waves: usize,
    pub min_prominence: f64,
    pub min_separation: usize,
    pub cluster: ClusterOptions,
    pub follow: FollowOptions,
}

impl TrackingParams {
    pub fn new(n_waves: usize) -> Self {
        Self {
            n_waves,
            min_prominence: 0.1,
            min_separation: 5,
            cluster: ClusterOptions::new(10.0),
            follow: FollowOptions::default(),
        }
    }
}

/// Detects fronts and groups them into tracks: spectral clustering on the
/// first `seed_rows` rows, then gated association through the rest.
pub fn track_waves(
    field: &SpatiotemporalField,
    params: &TrackingParams,
    seed_rows: usize,
) -> Result<Vec<WaveTrack>> {
    let points = detect_ridges(field, params.min_prominence, params.min_separation)?;
    let seed_rows = seed_rows.clamp(1, field.n_time());
    let head: Vec<_> = points.iter().filter(|p| p.t_index < seed_rows).copied().collect();
    if head.is_empty() {
        return Err(Error::NoPeaks { rows: seed_rows });
    }
    let seeds = cluster_waves(&head, params.n_waves, field.n_space(), &params.cluster)?;
    if seed_rows >= field.n_time() {
        return Ok(seeds);
    }
    follow_tracks(&points, &seeds, field.n_space(), &params.follow)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreprocessOptions {
    pub window: usize,
    pub tracking: TrackingParams,
    pub sr3: Sr3Options,
}

impl PreprocessOptions {
    pub fn new(n_waves: usize) -> Self {
        Self {
            window: 10,
            tracking: TrackingParams::new(n_waves),
            sr3: Sr3Options {
                lambda: Lambda::Absolute(0.0),
                ..Sr3Options::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub field: SpatiotemporalField,
    /// Mean fitted speed (px per unit time).
    pub mean_speed: f64,
    pub offsets: Vec<f64>,
    pub tracks: Vec<WaveTrack>,
    pub model: SpeedModel,
}

/// Fits `{1, t}` per wave on the leading `window` rows and shifts the whole
/// record by the mean slope: row `r` moves by `mean_speed * r * dt`.
pub fn preprocess_shift(field: &SpatiotemporalField, opts: &PreprocessOptions) -> Result<Preprocessed> {
    if opts.window < 2 || opts.window > field.n_time() {
        return Err(invalid("window", "must be between 2 and the number of rows"));
    }
    let head = field.time_slice(0, opts.window)?;
    let points = detect_ridges(&head, opts.tracking.min_prominence, opts.tracking.min_separation)?;
    if points.is_empty() {
        return Err(Error::NoPeaks { rows: opts.window });
    }
    let tracks = cluster_waves(&points, opts.tracking.n_waves, field.n_space(), &opts.tracking.cluster)?;
    let library = FunctionLibrary::linear();
    let model = fit_sr3(&tracks, &library, field.dt(), &opts.sr3)?;
    let slope = library.index_of("t").expect("linear library has t");
    let mean_speed =
        (0..model.n_waves()).map(|w| model.coefficients[(slope, w)]).sum::<f64>() / model.n_waves() as f64;
    let offsets: Vec<f64> = (0..field.n_time())
        .map(|r| mean_speed * r as f64 * field.dt())
        .collect();
    let shifted = shift_field(field, &ShiftSpec::linear(offsets.clone()))?;
    Ok(Preprocessed {
        field: shifted,
        mean_speed,
        offsets,
        tracks,
        model,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RefineOptions {
    pub tracking: TrackingParams,
    /// Rows clustered spectrally before association takes over.
    pub seed_rows: usize,
    pub sr3: Sr3Options,
    pub interpolation: Interpolation,
}

impl RefineOptions {
    pub fn new(n_waves: usize) -> Self {
        Self {
            tracking: TrackingParams::new(n_waves),
            seed_rows: 50,
            sr3: Sr3Options {
                lambda: Lambda::Relative(0.01),
                regularizer: Regularizer::L0,
                ..Sr3Options::default()
            },
            interpolation: Interpolation::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub tracks: Vec<WaveTrack>,
    pub model: SpeedModel,
    pub library: FunctionLibrary,
}

impl Refined {
    /// Offsets that hold `wave` at its fitted initial position.
    pub fn offsets(&self, wave: usize, n_time: usize, dt: f64) -> Result<Vec<f64>> {
        if wave >= self.model.n_waves() {
            return Err(invalid("wave", "index out of range"));
        }
        let x0 = self.model.position(&self.library, wave, 0.0);
        Ok((0..n_time)
            .map(|r| self.model.position(&self.library, wave, r as f64 * dt) - x0)
            .collect())
    }
}

/// Re-detects and tracks fronts on a preprocessed record and fits every wave
/// over `library`.
pub fn refine_models(
    preprocessed: &SpatiotemporalField,
    library: &FunctionLibrary,
    opts: &RefineOptions,
) -> Result<Refined> {
    let tracks = track_waves(preprocessed, &opts.tracking, opts.seed_rows)?;
    let model = fit_sr3(&tracks, library, preprocessed.dt(), &opts.sr3)?;
    Ok(Refined {
        tracks,
        model,
        library: library.clone(),
    })
}

/// Refines and shifts `preprocessed` into the frame of wave `wave`.
pub fn refine_shift(
    preprocessed: &SpatiotemporalField,
    library: &FunctionLibrary,
    wave: usize,
    opts: &RefineOptions,
) -> Result<(SpatiotemporalField, Refined)> {
    if wave >= opts.tracking.n_waves {
        return Err(invalid("wave", "index out of range"));
    }
    let refined = refine_models(preprocessed, library, opts)?;
    let offsets = refined.offsets(wave, preprocessed.n_time(), preprocessed.dt())?;
    let field = shift_field(
        preprocessed,
        &ShiftSpec {
            offsets,
            interpolation: opts.interpolation,
        },
    )?;
    Ok((field, refined))
}

/// Both stages on a laboratory-frame record.
#[derive(Debug, Clone, PartialEq)]
pub struct Untwisted {
    pub preprocessed: Preprocessed,
    pub refined: Refined,
    /// One co-moving field per wave, each shifted once from the original data
    /// by the combined preprocessing and refining offsets.
    pub frames: Vec<SpatiotemporalField>,
    pub total_offsets: Vec<Vec<f64>>,
}

pub fn untwist(
    field: &SpatiotemporalField,
    pre: &PreprocessOptions,
    library: &FunctionLibrary,
    refine: &RefineOptions,
) -> Result<Untwisted> {
    let preprocessed = preprocess_shift(field, pre)?;
    let refined = refine_models(&preprocessed.field, library, refine)?;
    let mut frames = Vec::new();
    let mut total_offsets = Vec::new();
    for w in 0..refined.model.n_waves() {
        let local = refined.offsets(w, field.n_time(), field.dt())?;
        let total: Vec<f64> = preprocessed.offsets.iter().zip(&local).map(|(a, b)| a + b).collect();
        frames.push(shift_field(
            field,
            &ShiftSpec {
                offsets: total.clone(),
                interpolation: refine.interpolation,
            },
        )?);
        total_offsets.push(total);
    }
    Ok(Untwisted {
        preprocessed,
        refined,
        frames,
        total_offsets,
    })
}
