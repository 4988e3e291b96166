//! Koopman-style models driven by pure oscillators.
//!
//! The forecast model decodes `[cos(w t), sin(w t)]` features into a whole
//! snapshot; the modal model writes a field as a sum of spatially periodic
//! profiles, each translating at a constant speed. In both, frequencies are
//! found by a global search that exploits the periodicity of every
//! single-time loss `L_t(w)` in `w` (period `2 pi / t`), alternating with
//! gradient descent on the network weights.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decomposition::sorted_svd;
use crate::error::{invalid, Error, Result};
use crate::field::{variance_explained_slices, SpatiotemporalField};
use crate::nn::{train, FeedForwardNet, TrainSchedule};
use crate::spectrum::{dtft, dtft_complex};

/// `[cos(w_1 t) .. cos(w_n t), sin(w_1 t) .. sin(w_n t)]`.
pub fn oscillator_features(omegas: &[f64], t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * omegas.len());
    out.extend(omegas.iter().map(|w| (w * t).cos()));
    out.extend(omegas.iter().map(|w| (w * t).sin()));
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FreqSearchOptions {
    /// Samples of each `L_t` over its first period.
    pub phase_samples: usize,
    /// Aggregate grid points per `pi / n_time`; the grid over `[0, pi)` has
    /// `grid_density * n_time` points.
    pub grid_density: usize,
    /// Search `(-pi, pi]` instead of `[0, pi)`.
    pub signed: bool,
}

impl Default for FreqSearchOptions {
    fn default() -> Self {
        Self {
            phase_samples: 8,
            grid_density: 8,
            signed: false,
        }
    }
}

/// Aggregate loss `E(w) = sum_t L_t(w)` on the dense search grid, built from
/// `phase_samples` evaluations of each `L_t` over its first period and a
/// trigonometric interpolant through them.
///
/// `losses(w)` receives one frequency per time index and returns `L_t(w[t])`
/// for every `t`.
pub fn aggregate_loss_grid<F>(mut losses: F, n_time: usize, opts: &FreqSearchOptions) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let p = opts.phase_samples;
    if p < 2 || opts.grid_density == 0 || n_time < 2 {
        return Err(invalid("frequency search", "need >= 2 phase samples, a nonzero grid and >= 2 times"));
    }
    // samples[j][t] = L_t(theta_j / t)
    let mut samples = Vec::with_capacity(p);
    for j in 0..p {
        let theta = 2.0 * PI * j as f64 / p as f64;
        let w: Vec<f64> = (0..n_time).map(|t| if t == 0 { 0.0 } else { theta / t as f64 }).collect();
        let l = losses(&w)?;
        if l.len() != n_time {
            return Err(invalid("losses", "must return one value per time"));
        }
        samples.push(l);
    }
    let harmonics = p / 2;
    // c[h][t]: Fourier coefficient h of L_t as a function of the phase w t
    let mut coef = vec![vec![Complex64::new(0.0, 0.0); n_time]; harmonics + 1];
    for (h, row) in coef.iter_mut().enumerate() {
        for (j, s) in samples.iter().enumerate() {
            let rot = Complex64::from_polar(1.0 / p as f64, -2.0 * PI * (h * j) as f64 / p as f64);
            for t in 1..n_time {
                row[t] += rot * s[t];
            }
        }
        let weight = if h == 0 || (p % 2 == 0 && h == harmonics) { 1.0 } else { 2.0 };
        for c in row.iter_mut() {
            *c *= weight;
        }
    }
    let step = PI / (opts.grid_density * n_time) as f64;
    let n_grid = opts.grid_density * n_time * if opts.signed { 2 } else { 1 };
    let mut omegas = Vec::with_capacity(n_grid);
    let mut values = Vec::with_capacity(n_grid);
    for g in 0..n_grid {
        let mut w = g as f64 * step;
        if opts.signed && w > PI {
            w -= 2.0 * PI;
        }
        let mut e = 0.0;
        for (h, row) in coef.iter().enumerate() {
            // sum_t c[h][t] exp(i h w t) = conj(dtft(conj c, h w))
            e += dtft_complex_conj(row, h as f64 * w);
        }
        omegas.push(w);
        values.push(e);
    }
    Ok((omegas, values))
}

/// `Re sum_t c[t] exp(i w t)`.
fn dtft_complex_conj(c: &[Complex64], w: f64) -> f64 {
    let conj: Vec<Complex64> = c.iter().map(|v| v.conj()).collect();
    dtft_complex(&conj, w).re
}

/// Global minimizer of `E(w) = sum_t L_t(w)` along one coordinate: the
/// minimum of [`aggregate_loss_grid`], polished by golden-section search on
/// the exact `E` within one grid step either side.
pub fn global_freq_search<F>(mut losses: F, n_time: usize, opts: &FreqSearchOptions) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let (grid, values) = aggregate_loss_grid(&mut losses, n_time, opts)?;
    let (ibest, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    let step = PI / (opts.grid_density * n_time) as f64;
    let mut exact = |w: f64| -> Result<f64> { Ok(losses(&vec![w; n_time])?.iter().sum()) };
    let center = grid[ibest];
    let (mut a, mut b) = (center - step, center + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (exact(c)?, exact(d)?);
    for _ in 0..40 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = exact(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = exact(d)?;
        }
    }
    let polished = if fc <= fd { c } else { d };
    let mut best = if exact(polished)? <= exact(center)? { polished } else { center };
    if !opts.signed {
        best = best.clamp(0.0, PI);
    }
    Ok(best)
}

/// [`global_freq_search`] for a loss given one time at a time.
pub fn global_freq_search_fn<F>(mut loss_at: F, n_time: usize, opts: &FreqSearchOptions) -> Result<f64>
where
    F: FnMut(usize, f64) -> f64,
{
    global_freq_search(
        |w: &[f64]| Ok(w.iter().enumerate().map(|(t, w)| loss_at(t, *w)).collect()),
        n_time,
        opts,
    )
}

/// Largest local maxima of `power` on the grid `lo + k * step`, each refined
/// by a parabola; returned strongest first.
fn spectral_peaks(power: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64, count: usize) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| power(lo + k as f64 * step)).collect();
    let mut peaks: Vec<(usize, f64)> = (0..n)
        .filter(|&k| {
            let left = if k == 0 { f64::NEG_INFINITY } else { grid[k - 1] };
            let right = if k + 1 == n { f64::NEG_INFINITY } else { grid[k + 1] };
            grid[k] >= left && grid[k] > right
        })
        .map(|k| (k, grid[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks
        .into_iter()
        .take(count)
        .map(|(k, p0)| {
            let w = lo + k as f64 * step;
            let (pm, pp) = (power(w - step), power(w + step));
            let den = pm - 2.0 * p0 + pp;
            if den < 0.0 {
                w + (0.5 * (pm - pp) / den).clamp(-0.5, 0.5) * step
            } else {
                w
            }
        })
        .collect()
}

fn normalization(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        var.sqrt()
    } else {
        1.0
    }
}

// ---------------------------------------------------------------------------
// Koopman forecast

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct KoopmanForecastOptions {
    pub n_freq: usize,
    pub hidden: Vec<usize>,
    /// Alternations of decoder training and frequency search.
    pub rounds: usize,
    /// Decoder schedule for each round.
    pub schedule: TrainSchedule,
    /// Fraction of rows used for training; the rest are held out.
    pub train_fraction: f64,
    pub search: FreqSearchOptions,
    pub seed: u64,
}

impl Default for KoopmanForecastOptions {
    fn default() -> Self {
        Self {
            n_freq: 1,
            hidden: vec![32, 32],
            rounds: 3,
            schedule: TrainSchedule {
                epochs: 400,
                learning_rate: 0.05,
                momentum: 0.9,
                decay_every: 200,
                decay_factor: 0.5,
            },
            train_fraction: 6.0 / 7.0,
            search: FreqSearchOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanForecastModel {
    /// Radians per time step, in `[0, pi)`.
    pub omegas: Vec<f64>,
    /// Maps the `2 n` oscillator features to a snapshot divided by `scale`.
    pub decoder: FeedForwardNet,
    pub scale: f64,
    pub n_space: usize,
    pub dt: f64,
    pub train_len: usize,
    pub n_time: usize,
    /// Training loss (mean squared error, normalized units) after each epoch.
    pub loss_history: Vec<f64>,
    pub train_variance_explained: Option<f64>,
    pub test_variance_explained: Option<f64>,
}

/// Mean squared decoder error over `rows` and its gradients with respect to
/// the decoder parameters and to each frequency.
fn forecast_loss(
    decoder: &FeedForwardNet,
    omegas: &[f64],
    target: &DMatrix<f64>,
    with_grad: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = omegas.len();
    let t_len = target.ncols();
    let input = DMatrix::from_fn(2 * n, t_len, |i, t| {
        if i < n {
            (omegas[i] * t as f64).cos()
        } else {
            (omegas[i - n] * t as f64).sin()
        }
    });
    let cache = decoder.forward_batch(&input)?;
    let resid = cache.output() - target;
    let denom = resid.len() as f64;
    let loss = resid.norm_squared() / denom;
    if !with_grad {
        return Ok((loss, Vec::new(), Vec::new()));
    }
    let grads = decoder.backward(&cache, &(resid * (2.0 / denom)))?;
    let mut gw = vec![0.0; n];
    for (i, g) in gw.iter_mut().enumerate() {
        let w = omegas[i];
        for t in 0..t_len {
            let tt = t as f64;
            // d cos(w t) = -t sin(w t), d sin(w t) = t cos(w t)
            *g += grads.input[(i, t)] * (-tt * (w * tt).sin()) + grads.input[(i + n, t)] * (tt * (w * tt).cos());
        }
    }
    Ok((loss, grads.flat(), gw))
}

impl KoopmanForecastModel {
    /// Rows `f(Omega(w t)) * scale` for `t` in `rows`; `t` may exceed the
    /// training range.
    pub fn forecast(&self, rows: Range<usize>) -> Result<SpatiotemporalField> {
        let n = self.omegas.len();
        let len = rows.len();
        let input = DMatrix::from_fn(2 * n, len, |i, c| {
            let t = (rows.start + c) as f64;
            if i < n {
                (self.omegas[i] * t).cos()
            } else {
                (self.omegas[i - n] * t).sin()
            }
        });
        let out = self.decoder.forward_batch(&input)?.output() * self.scale;
        SpatiotemporalField::from_snapshots(&out, self.dt)
    }

    /// Mean squared error over the rows of `data` (in normalized units), with
    /// gradients for the decoder parameters and the frequencies.
    pub fn loss_and_gradient(&self, data: &SpatiotemporalField) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let target = data.snapshot_matrix() / self.scale;
        forecast_loss(&self.decoder, &self.omegas, &target, true)
    }

    pub fn test_variance_explained(&self) -> Result<f64> {
        self.test_variance_explained.ok_or(Error::UndefinedMetric)
    }
}

pub fn fit_koopman_forecast(field: &SpatiotemporalField, opts: &KoopmanForecastOptions) -> Result<KoopmanForecastModel> {
    if opts.n_freq < 1 {
        return Err(invalid("n_freq", "must be >= 1"));
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction <= 1.0) {
        return Err(invalid("train_fraction", "must be in (0, 1]"));
    }
    let n_time = field.n_time();
    let k = field.n_space();
    let train_len = ((n_time as f64 * opts.train_fraction).round() as usize).clamp(2, n_time);
    let scale = normalization(field.values());
    let target = field.time_slice(0, train_len)?.snapshot_matrix() / scale;

    // initial frequencies: peaks of the temporal power summed over space,
    // computed on the leading POD time series
    let centered = {
        let mut m = target.clone();
        for mut row in m.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        m
    };
    let (_, s, vt) = sorted_svd(&centered);
    let keep = (2 * opts.n_freq + 2).min(s.len());
    let series: Vec<Vec<f64>> = (0..keep).map(|i| vt.row(i).iter().map(|v| v * s[i]).collect()).collect();
    let power = |w: f64| series.iter().map(|x| dtft(x, w).norm_sqr()).sum::<f64>();
    let step = PI / (2 * train_len) as f64;
    let mut omegas = spectral_peaks(power, step, PI - step, step, opts.n_freq);
    while omegas.len() < opts.n_freq {
        omegas.push(step * (omegas.len() + 1) as f64);
    }

    let mut sizes = vec![2 * opts.n_freq];
    sizes.extend(&opts.hidden);
    sizes.push(k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut decoder = FeedForwardNet::new(&sizes, &mut rng)?;
    let last = decoder.biases().len() - 1;
    for (x, b) in decoder.biases_mut()[last].iter_mut().enumerate() {
        *b = target.row(x).mean();
    }

    let mut history: Vec<f64> = Vec::new();
    for _ in 0..opts.rounds.max(1) {
        let out = {
            let omegas = &omegas;
            let target = &target;
            let mut net = decoder.clone();
            train(decoder.params(), &opts.schedule, move |p| {
                net.set_params(p)?;
                let (l, g, _) = forecast_loss(&net, omegas, target, true)?;
                Ok((l, g))
            })?
        };
        decoder.set_params(&out.params)?;
        if history.is_empty() {
            history.extend(out.history);
        } else {
            history.extend(&out.history[1..]);
        }
        for i in 0..opts.n_freq {
            let current = forecast_loss(&decoder, &omegas, &target, false)?.0;
            let candidate = global_freq_search(
                |w: &[f64]| per_time_forecast_loss(&decoder, &omegas, i, w, &target),
                train_len,
                &opts.search,
            )?;
            let mut trial = omegas.clone();
            trial[i] = candidate;
            if forecast_loss(&decoder, &trial, &target, false)?.0 < current {
                omegas = trial;
                let l = forecast_loss(&decoder, &omegas, &target, false)?.0;
                history.push(l);
            }
        }
    }

    let mut model = KoopmanForecastModel {
        omegas,
        decoder,
        scale,
        n_space: k,
        dt: field.dt(),
        train_len,
        n_time,
        loss_history: history,
        train_variance_explained: None,
        test_variance_explained: None,
    };
    let pred = model.forecast(0..n_time)?;
    let split = train_len * k;
    model.train_variance_explained = variance_explained_slices(&field.values()[..split], &pred.values()[..split]).ok();
    if train_len < n_time {
        model.test_variance_explained =
            variance_explained_slices(&field.values()[split..], &pred.values()[split..]).ok();
    }
    Ok(model)
}

/// `L_t` for every training row with frequency `i` set to `w[t]`.
fn per_time_forecast_loss(
    decoder: &FeedForwardNet,
    omegas: &[f64],
    i: usize,
    w: &[f64],
    target: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let n = omegas.len();
    let t_len = target.ncols();
    let input = DMatrix::from_fn(2 * n, t_len, |r, t| {
        let j = r % n;
        let freq = if j == i { w[t] } else { omegas[j] };
        let ph = freq * t as f64;
        if r < n {
            ph.cos()
        } else {
            ph.sin()
        }
    });
    let out = decoder.forward_batch(&input)?;
    let resid = out.output() - target;
    Ok(resid.column_iter().map(|c| c.norm_squared()).collect())
}

// ---------------------------------------------------------------------------
// Modal Koopman

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ModalKoopmanOptions {
    pub n_modes: usize,
    pub hidden: Vec<usize>,
    pub rounds: usize,
    pub schedule: TrainSchedule,
    pub search: FreqSearchOptions,
    pub seed: u64,
}

impl Default for ModalKoopmanOptions {
    fn default() -> Self {
        Self {
            n_modes: 2,
            hidden: vec![32, 32],
            rounds: 2,
            schedule: TrainSchedule {
                epochs: 300,
                learning_rate: 0.05,
                momentum: 0.9,
                decay_every: 150,
                decay_factor: 0.5,
            },
            search: FreqSearchOptions {
                phase_samples: 32,
                grid_density: 8,
                signed: true,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalKoopmanModel {
    pub n_space: usize,
    pub dt: f64,
    /// Pixels per time step; positive moves toward increasing `x`.
    pub speeds: Vec<f64>,
    /// `g_i([sin p, cos p])` with `p = 2 pi (x - v_i t) / n_space`.
    pub mode_nets: Vec<FeedForwardNet>,
    pub scale: f64,
    pub loss_history: Vec<f64>,
    pub variance_explained: Option<f64>,
}

/// Angular rate (rad per step) of a speed in px per step.
fn rate(speed: f64, k: usize) -> f64 {
    2.0 * PI * speed / k as f64
}

fn mode_inputs(k: usize, rows: &Range<usize>, rates: &dyn Fn(usize) -> f64) -> DMatrix<f64> {
    let len = rows.len();
    DMatrix::from_fn(2, k * len, |r, c| {
        let (t, x) = (rows.start + c / k, c % k);
        let ph = 2.0 * PI * x as f64 / k as f64 - rates(t) * t as f64;
        if r == 0 {
            ph.sin()
        } else {
            ph.cos()
        }
    })
}

/// Field values in row-major order as one row vector, divided by `scale`.
fn flat_target(field: &SpatiotemporalField, scale: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, field.values().len(), field.values()) / scale
}

/// Start of each net's block in the concatenated parameter vector, plus the total.
fn param_offsets(nets: &[FeedForwardNet]) -> Vec<usize> {
    let mut o = vec![0];
    for n in nets {
        o.push(o.last().unwrap() + n.n_params());
    }
    o
}

fn modal_loss(
    nets: &[FeedForwardNet],
    rates: &[f64],
    k: usize,
    target: &DMatrix<f64>,
    with_grad: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n_time = target.ncols() / k;
    let rows = 0..n_time;
    let mut caches = Vec::with_capacity(nets.len());
    let mut inputs = Vec::with_capacity(nets.len());
    let mut pred = DMatrix::<f64>::zeros(1, target.ncols());
    for (net, &w) in nets.iter().zip(rates) {
        let input = mode_inputs(k, &rows, &|_| w);
        let cache = net.forward_batch(&input)?;
        pred += cache.output();
        caches.push(cache);
        inputs.push(input);
    }
    let resid = pred - target;
    let denom = resid.len() as f64;
    let loss = resid.norm_squared() / denom;
    if !with_grad {
        return Ok((loss, Vec::new(), Vec::new()));
    }
    let g_out = resid * (2.0 / denom);
    let mut grads = Vec::new();
    let mut grad_rates = Vec::with_capacity(nets.len());
    for ((net, cache), input) in nets.iter().zip(&caches).zip(&inputs) {
        let g = net.backward(cache, &g_out)?;
        grads.extend(g.flat());
        // p = 2 pi x / k - w t: d sin p / dw = -t cos p, d cos p / dw = t sin p
        let mut gw = 0.0;
        for c in 0..input.ncols() {
            let t = (c / k) as f64;
            let (s, co) = (input[(0, c)], input[(1, c)]);
            gw += g.input[(0, c)] * (-t * co) + g.input[(1, c)] * (t * s);
        }
        grad_rates.push(gw);
    }
    Ok((loss, grads, grad_rates))
}

impl ModalKoopmanModel {
    pub fn n_modes(&self) -> usize {
        self.mode_nets.len()
    }

    /// Profile of mode `i` at spatial coordinate `x` (any real; period `n_space`).
    pub fn mode_profile(&self, i: usize, x: f64) -> Result<f64> {
        let p = 2.0 * PI * x / self.n_space as f64;
        Ok(self.mode_nets[i].forward(&[p.sin(), p.cos()])?[0] * self.scale)
    }

    fn mode_values(&self, i: usize, rows: &Range<usize>) -> Result<Vec<f64>> {
        let w = rate(self.speeds[i], self.n_space);
        let input = mode_inputs(self.n_space, rows, &|_| w);
        Ok(self.mode_nets[i]
            .forward_batch(&input)?
            .output()
            .iter()
            .map(|v| v * self.scale)
            .collect())
    }

    /// Sum of all modes over `rows`.
    pub fn forecast(&self, rows: Range<usize>) -> Result<SpatiotemporalField> {
        Ok(decompose_modes(self, rows)?.1)
    }

    /// Mean squared error against `data` (normalized units) and its gradients
    /// with respect to all mode-net parameters (concatenated by mode) and to
    /// each speed.
    pub fn loss_and_gradient(&self, data: &SpatiotemporalField) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        if data.n_space() != self.n_space {
            return Err(invalid("data", "spatial size differs from the model"));
        }
        let rates: Vec<f64> = self.speeds.iter().map(|v| rate(*v, self.n_space)).collect();
        let (l, g, gr) = modal_loss(&self.mode_nets, &rates, self.n_space, &flat_target(data, self.scale), true)?;
        let dv = 2.0 * PI / self.n_space as f64;
        Ok((l, g, gr.into_iter().map(|v| v * dv).collect()))
    }
}

/// Per-mode fields over `rows` and their sum, accumulated in mode order.
pub fn decompose_modes(
    model: &ModalKoopmanModel,
    rows: Range<usize>,
) -> Result<(Vec<SpatiotemporalField>, SpatiotemporalField)> {
    if rows.len() < 2 {
        return Err(invalid("rows", "need at least two rows"));
    }
    let k = model.n_space;
    let mut total = vec![0.0; rows.len() * k];
    let mut modes = Vec::with_capacity(model.n_modes());
    for i in 0..model.n_modes() {
        let v = model.mode_values(i, &rows)?;
        for (a, b) in total.iter_mut().zip(&v) {
            *a += b;
        }
        modes.push(SpatiotemporalField::new(v, rows.len(), k, model.dt)?);
    }
    Ok((modes, SpatiotemporalField::new(total, rows.len(), k, model.dt)?))
}

/// `L_t` for every row with mode `i` moving at angular rate `w[t]`.
fn per_time_modal_loss(
    nets: &[FeedForwardNet],
    i: usize,
    k: usize,
    others: &DMatrix<f64>,
    target: &DMatrix<f64>,
    w: &[f64],
) -> Result<Vec<f64>> {
    let n_time = target.ncols() / k;
    let input = mode_inputs(k, &(0..n_time), &|t| w[t]);
    let out = nets[i].forward_batch(&input)?;
    let resid = out.output() + others - target;
    Ok((0..n_time)
        .map(|t| resid.columns(t * k, k).norm_squared())
        .collect())
}

pub fn fit_modal_koopman(field: &SpatiotemporalField, opts: &ModalKoopmanOptions) -> Result<ModalKoopmanModel> {
    let n = opts.n_modes;
    if n < 1 {
        return Err(invalid("n_modes", "must be >= 1"));
    }
    let k = field.n_space();
    let n_time = field.n_time();
    let scale = normalization(field.values());
    let target = flat_target(field, scale);

    // initial rates: the first spatial Fourier coefficient of a mode moving
    // at rate w rotates as exp(-i w t)
    let a1: Vec<Complex64> = field
        .rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(x, v)| Complex64::from_polar(*v / scale, -2.0 * PI * x as f64 / k as f64))
                .sum()
        })
        .collect();
    let step = PI / (2 * n_time) as f64;
    let mut rates: Vec<f64> = spectral_peaks(|nu| dtft_complex(&a1, nu).norm_sqr(), -PI + step, PI, step, n)
        .into_iter()
        .map(|nu| -nu)
        .collect();
    while rates.len() < n {
        rates.push(0.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sizes = vec![2];
    sizes.extend(&opts.hidden);
    sizes.push(1);
    let mean = target.mean();
    let mut nets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut net = FeedForwardNet::new(&sizes, &mut rng)?;
        let last = net.biases().len() - 1;
        net.biases_mut()[last][0] = mean / n as f64;
        nets.push(net);
    }

    let mut history: Vec<f64> = Vec::new();
    for _ in 0..opts.rounds.max(1) {
        let flat: Vec<f64> = nets.iter().flat_map(|n| n.params()).collect();
        let offsets = param_offsets(&nets);
        let out = {
            let mut work = nets.clone();
            let rates = &rates;
            let target = &target;
            let offsets = &offsets;
            train(flat, &opts.schedule, move |p| {
                for (j, net) in work.iter_mut().enumerate() {
                    net.set_params(&p[offsets[j]..offsets[j + 1]])?;
                }
                let (l, g, _) = modal_loss(&work, rates, k, target, true)?;
                Ok((l, g))
            })?
        };
        for (j, net) in nets.iter_mut().enumerate() {
            net.set_params(&out.params[offsets[j]..offsets[j + 1]])?;
        }
        if history.is_empty() {
            history.extend(out.history);
        } else {
            history.extend(&out.history[1..]);
        }
        for i in 0..n {
            let current = modal_loss(&nets, &rates, k, &target, false)?.0;
            let mut others = DMatrix::<f64>::zeros(1, target.ncols());
            for (j, net) in nets.iter().enumerate() {
                if j != i {
                    let w = rates[j];
                    others += net.forward_batch(&mode_inputs(k, &(0..n_time), &|_| w))?.output();
                }
            }
            let candidate = global_freq_search(
                |w: &[f64]| per_time_modal_loss(&nets, i, k, &others, &target, w),
                n_time,
                &opts.search,
            )?;
            let mut trial = rates.clone();
            trial[i] = candidate;
            if modal_loss(&nets, &trial, k, &target, false)?.0 < current {
                rates = trial;
                history.push(modal_loss(&nets, &rates, k, &target, false)?.0);
            }
        }
    }

    let mut model = ModalKoopmanModel {
        n_space: k,
        dt: field.dt(),
        speeds: rates.iter().map(|w| w * k as f64 / (2.0 * PI)).collect(),
        mode_nets: nets,
        scale,
        loss_history: history,
        variance_explained: None,
    };
    let pred = model.forecast(0..n_time)?;
    model.variance_explained = variance_explained_slices(field.values(), pred.values()).ok();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_at_zero_and_quarter_period() {
        assert_eq!(oscillator_features(&[0.3, 1.1], 0.0), vec![1.0, 1.0, 0.0, 0.0]);
        let f = oscillator_features(&[PI / 2.0], 1.0);
        assert!(f[0].abs() < 1e-12 && (f[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constructed_minimum() {
        // L_t(w) = 1 - cos(t (w - pi/4)) is periodic in 2 pi / t with its
        // common minimum at pi/4
        let opts = FreqSearchOptions::default();
        let w = global_freq_search_fn(|t, w| 1.0 - (t as f64 * (w - PI / 4.0)).cos(), 300, &opts).unwrap();
        assert!((w - PI / 4.0).abs() <= PI / (8.0 * 300.0));
    }

    #[test]
    fn cosine_series_frequency() {
        let x: Vec<f64> = (0..500).map(|t| (0.3 * t as f64).cos()).collect();
        let w = global_freq_search_fn(|t, w| (x[t] - (w * t as f64).cos()).powi(2), 500, &FreqSearchOptions::default())
            .unwrap();
        assert!((w - 0.3).abs() < 2.0 * PI / 500.0);
    }
}
