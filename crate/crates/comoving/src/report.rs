//! JSON documents written by the pipeline. Every struct here deserializes
//! back from the file it produces.

use comoving_core::dmd::DmdModel;
use comoving_core::koopman::{KoopmanForecastModel, ModalKoopmanModel};
use comoving_core::library::{FunctionLibrary, LibraryTerm};
use comoving_core::lotka_volterra::LvFit;
use comoving_core::nn::FeedForwardNet;
use comoving_core::oscillator::OscillatorFit;
use comoving_core::sr3::{Regularizer, SpeedModel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::AppResult;

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Speed models from the sparse regression, one entry per wave in each list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedModelReport {
    pub terms: Vec<LibraryTerm>,
    pub c: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Least-squares refit on the support of `b`; these define the positions.
    pub coefficients: Vec<Vec<f64>>,
    pub active_terms: Vec<Vec<String>>,
    pub objective: f64,
    pub lambda: f64,
    pub zeta: f64,
    pub regularizer: Regularizer,
    pub iterations: usize,
    pub converged: bool,
}

impl SpeedModelReport {
    pub fn new(model: &SpeedModel, library: &FunctionLibrary) -> Self {
        Self {
            terms: library.terms.clone(),
            c: columns(&model.c),
            b: columns(&model.b),
            coefficients: columns(&model.coefficients),
            active_terms: (0..model.n_waves())
                .map(|w| model.active_terms(w).into_iter().map(|i| library.terms[i].name.clone()).collect())
                .collect(),
            objective: model.objective(),
            lambda: model.lambda,
            zeta: model.zeta,
            regularizer: model.regularizer,
            iterations: model.iterations,
            converged: model.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub energy_fractions: Vec<f64>,
    pub total_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcaReport {
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub low_rank_rank: usize,
    pub sparse_fraction: f64,
}

/// Complex numbers are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmdReport {
    pub rank: usize,
    pub dt: f64,
    pub eigenvalues: Vec<[f64; 2]>,
    pub continuous_eigenvalues: Vec<[f64; 2]>,
    pub amplitudes: Vec<[f64; 2]>,
    /// `||X - X_dmd||_F / ||X||_F` over the fitted snapshots.
    pub reconstruction_error: f64,
}

impl DmdReport {
    pub fn new(model: &DmdModel, reconstruction_error: f64) -> Self {
        let pair = |c: &nalgebra::Complex<f64>| [c.re, c.im];
        Self {
            rank: model.rank,
            dt: model.dt,
            eigenvalues: model.eigenvalues.iter().map(pair).collect(),
            continuous_eigenvalues: model.continuous_eigenvalues().iter().map(pair).collect(),
            amplitudes: model.amplitudes.iter().map(pair).collect(),
            reconstruction_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorReport {
    pub wave_a: usize,
    pub wave_b: usize,
    /// First time row of the series.
    pub t_start: usize,
    pub samples: usize,
    pub fit: OscillatorFit,
    pub convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMap {
    pub wave: usize,
    pub negated: bool,
    /// `mapped = (sign * x - shift) / scale + floor`.
    pub shift: f64,
    pub scale: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvReport {
    pub fit: LvFit,
    pub train_len: usize,
    pub samples: usize,
    pub h: f64,
    pub y: SeriesMap,
    pub z: SeriesMap,
    pub convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetFile {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl NetFile {
    pub fn new(net: &FeedForwardNet) -> Self {
        Self {
            layer_sizes: net.layer_sizes().to_vec(),
            params: net.params(),
        }
    }

    pub fn to_net(&self) -> AppResult<FeedForwardNet> {
        Ok(FeedForwardNet::from_params(&self.layer_sizes, &self.params)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModelFile {
    /// Radians per time step.
    pub omegas: Vec<f64>,
    pub decoder: NetFile,
    pub scale: f64,
    pub n_space: usize,
    pub dt: f64,
    pub train_len: usize,
    pub n_time: usize,
    pub train_variance_explained: Option<f64>,
    pub test_variance_explained: Option<f64>,
    pub final_loss: Option<f64>,
}

impl ForecastModelFile {
    pub fn new(m: &KoopmanForecastModel) -> Self {
        Self {
            omegas: m.omegas.clone(),
            decoder: NetFile::new(&m.decoder),
            scale: m.scale,
            n_space: m.n_space,
            dt: m.dt,
            train_len: m.train_len,
            n_time: m.n_time,
            train_variance_explained: m.train_variance_explained,
            test_variance_explained: m.test_variance_explained,
            final_loss: m.loss_history.last().copied(),
        }
    }

    pub fn to_model(&self) -> AppResult<KoopmanForecastModel> {
        Ok(KoopmanForecastModel {
            omegas: self.omegas.clone(),
            decoder: self.decoder.to_net()?,
            scale: self.scale,
            n_space: self.n_space,
            dt: self.dt,
            train_len: self.train_len,
            n_time: self.n_time,
            loss_history: Vec::new(),
            train_variance_explained: self.train_variance_explained,
            test_variance_explained: self.test_variance_explained,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalModelFile {
    /// Pixels per time step; positive travels toward increasing x.
    pub speeds: Vec<f64>,
    /// `2 pi speed / n_space`, radians per time step, same sign as the speed.
    pub omegas: Vec<f64>,
    pub mode_nets: Vec<NetFile>,
    pub scale: f64,
    pub n_space: usize,
    pub dt: f64,
    pub variance_explained: Option<f64>,
    pub final_loss: Option<f64>,
}

impl ModalModelFile {
    pub fn new(m: &ModalKoopmanModel) -> Self {
        Self {
            speeds: m.speeds.clone(),
            omegas: m
                .speeds
                .iter()
                .map(|v| 2.0 * std::f64::consts::PI * v / m.n_space as f64)
                .collect(),
            mode_nets: m.mode_nets.iter().map(NetFile::new).collect(),
            scale: m.scale,
            n_space: m.n_space,
            dt: m.dt,
            variance_explained: m.variance_explained,
            final_loss: m.loss_history.last().copied(),
        }
    }

    pub fn to_model(&self) -> AppResult<ModalKoopmanModel> {
        Ok(ModalKoopmanModel {
            n_space: self.n_space,
            dt: self.dt,
            speeds: self.speeds.clone(),
            mode_nets: self.mode_nets.iter().map(NetFile::to_net).collect::<AppResult<_>>()?,
            scale: self.scale,
            loss_history: Vec::new(),
            variance_explained: self.variance_explained,
        })
    }
}
