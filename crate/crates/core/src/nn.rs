//! Small fully connected networks trained by full-batch gradient descent.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// `tanh` on hidden layers, identity on the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layer_sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l + 1` (`out x in`).
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Activations of every layer for a batch (samples in columns).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("at least two layers")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    /// Gradient with respect to the network input, same shape as the batch.
    pub input: DMatrix<f64>,
}

impl Gradients {
    /// Flattened in the same order as [`FeedForwardNet::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// `tanh` through a single `exp`; within a few ulps of the library function
/// and noticeably cheaper in the inner loops.
#[inline]
pub fn tanh(x: f64) -> f64 {
    if x.abs() > 19.0 {
        return x.signum();
    }
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.iter().any(|s| *s == 0) {
        return Err(invalid("layer_sizes", "need at least two nonzero layer sizes"));
    }
    Ok(())
}

impl FeedForwardNet {
    /// Glorot-uniform weights drawn from `rng`, zero biases.
    pub fn new<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            // column-major fill order is part of the reproducibility contract
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..=limit)));
            biases.push(DVector::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn seeded(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        Self::new(layer_sizes, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect(),
            biases: layer_sizes[1..].iter().map(|n| DVector::zeros(*n)).collect(),
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.biases
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Per layer: weights (column-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.n_params()),
                found: format!("{}", flat.len()),
            });
        }
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return Err(invalid("parameters", format!("parameter {i} is not finite")));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[k];
                k += 1;
            }
            for v in b.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn from_params(layer_sizes: &[usize], flat: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        net.set_params(flat)?;
        Ok(net)
    }

    /// Forward pass on a batch with one sample per column.
    pub fn forward_batch(&self, input: &DMatrix<f64>) -> Result<ForwardCache> {
        if input.nrows() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("input dimension {}", self.input_dim()),
                found: format!("{}", input.nrows()),
            });
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(input.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * activations.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = tanh(*v));
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_batch(&DMatrix::from_column_slice(input.len(), 1, input))?;
        Ok(cache.output().iter().copied().collect())
    }

    /// Backpropagates `grad_output` (dLoss/dOutput, same shape as the output batch).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &DMatrix<f64>) -> Result<Gradients> {
        let out = cache.output();
        if grad_output.shape() != out.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", out.shape()),
                found: format!("{:?}", grad_output.shape()),
            });
        }
        let n = self.weights.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = grad_output.clone();
        for l in (0..n).rev() {
            let a_prev = &cache.activations[l];
            gw.push(&delta * a_prev.transpose());
            gb.push(delta.column_sum());
            let mut back = self.weights[l].transpose() * &delta;
            if l > 0 {
                // a_prev = tanh(z): d tanh = 1 - a^2
                back.zip_apply(a_prev, |d, a| *d *= 1.0 - a * a);
            }
            delta = back;
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients {
            weights: gw,
            biases: gb,
            input: delta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainSchedule {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiply the learning rate by `decay_factor` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.05,
            momentum: 0.9,
            decay_every: 200,
            decay_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    /// Loss at the accepted iterate after each epoch (first entry: initial loss).
    pub history: Vec<f64>,
    pub rejected: usize,
    /// Learning-rate multiplier left by rejected steps.
    pub backoff: f64,
}

/// Gradient descent with heavy-ball momentum and step decay.
///
/// A step that raises the loss is rejected: momentum is cleared and the
/// learning rate halved, so the recorded loss never increases.
pub fn train<F>(params: Vec<f64>, schedule: &TrainSchedule, mut loss_grad: F) -> Result<TrainOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(schedule.learning_rate > 0.0) || !(0.0..1.0).contains(&schedule.momentum) {
        return Err(invalid("schedule", "learning rate must be > 0 and momentum in [0, 1)"));
    }
    let mut theta = params;
    let (mut loss, mut grad) = loss_grad(&theta)?;
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut velocity = alloc::vec![0.0; theta.len()];
    let mut history = Vec::with_capacity(schedule.epochs + 1);
    history.push(loss);
    let mut backoff = 1.0;
    let mut rejected = 0;
    for epoch in 1..=schedule.epochs {
        let decays = if schedule.decay_every == 0 { 0 } else { (epoch - 1) / schedule.decay_every };
        let lr = schedule.learning_rate * schedule.decay_factor.powi(decays as i32) * backoff;
        for (v, g) in velocity.iter_mut().zip(&grad) {
            *v = schedule.momentum * *v - lr * g;
        }
        let trial: Vec<f64> = theta.iter().zip(&velocity).map(|(t, v)| t + v).collect();
        let (l_new, g_new) = loss_grad(&trial)?;
        if l_new.is_nan() {
            return Err(Error::Divergence { epoch });
        }
        if l_new <= loss {
            theta = trial;
            loss = l_new;
            grad = g_new;
        } else {
            rejected += 1;
            velocity.iter_mut().for_each(|v| *v = 0.0);
            backoff *= 0.5;
        }
        history.push(loss);
    }
    Ok(TrainOutcome {
        params: theta,
        history,
        rejected,
        backoff,
    })
}
