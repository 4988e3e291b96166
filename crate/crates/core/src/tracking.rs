//! Wave-front detection and grouping.
//!
//! Fronts are found row by row as prominent local maxima on the periodic
//! circle, grouped into per-wave tracks by spectral clustering, and unwrapped
//! across the seam so that positions are continuous in time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::field::SpatiotemporalField;
use crate::periodic::{circ_diff, circ_dist, wrap};

/// A detected front location.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeakPoint {
    pub t_index: usize,
    /// Column position, sub-pixel, in `[0, n_space)`.
    pub x_index: f64,
    pub intensity: f64,
}

/// Points belonging to one wave, ordered by time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveTrack {
    pub label: usize,
    pub points: Vec<PeakPoint>,
    /// Positions continued across the periodic seam; congruent to `points[k].x_index`.
    pub unwrapped_x: Vec<f64>,
}

impl WaveTrack {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(|p| p.t_index)
    }

    /// Least-squares line `x = a + b t` through the unwrapped positions; `None` for fewer than two rows.
    pub fn linear_fit(&self) -> Option<(f64, f64)> {
        line_fit(
            self.points
                .iter()
                .zip(&self.unwrapped_x)
                .map(|(p, &x)| (p.t_index as f64, x)),
        )
    }
}

fn line_fit(samples: impl Iterator<Item = (f64, f64)> + Clone) -> Option<(f64, f64)> {
    let n = samples.clone().count();
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let (st, sx) = samples.clone().fold((0.0, 0.0), |(a, b), (t, x)| (a + t, b + x));
    let (mt, mx) = (st / nf, sx / nf);
    let (mut stt, mut stx) = (0.0, 0.0);
    for (t, x) in samples {
        stt += (t - mt) * (t - mt);
        stx += (t - mt) * (x - mx);
    }
    if stt == 0.0 {
        return Some((mx, 0.0));
    }
    let b = stx / stt;
    Some((mx - b * mt, b))
}

/// Per-row prominent local maxima on the periodic circle.
///
/// A sample (or the midpoint of a flat run) is a maximum when strictly above
/// its left neighbour and strictly above the first differing sample to its
/// right. Prominence is measured against the higher of the two minima found
/// walking left and right until a strictly higher sample. Among peaks closer
/// than `min_separation`, the taller one is kept. Single-sample peaks are
/// refined by a three-point parabola.
pub fn detect_ridges(
    field: &SpatiotemporalField,
    min_prominence: f64,
    min_separation: usize,
) -> Result<Vec<PeakPoint>> {
    if min_separation < 1 {
        return Err(invalid("min_separation", "must be at least 1"));
    }
    let k = field.n_space();
    let mut out = Vec::new();
    for (t, row) in field.rows().enumerate() {
        let mut peaks = row_peaks(row, min_prominence);
        // tallest first, earliest column on ties
        peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.total_cmp(&b.0)));
        let mut kept: Vec<(f64, f64)> = Vec::new();
        for (x, _, h) in peaks {
            if kept
                .iter()
                .all(|&(kx, _)| circ_dist(kx, x, k as f64) >= min_separation as f64)
            {
                kept.push((x, h));
            }
        }
        kept.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.extend(kept.into_iter().map(|(x, h)| PeakPoint {
            t_index: t,
            x_index: x,
            intensity: h,
        }));
    }
    Ok(out)
}

/// `(sub-pixel position, prominence, interpolated height)` of each prominent maximum in a row.
fn row_peaks(row: &[f64], min_prominence: f64) -> Vec<(f64, f64, f64)> {
    let k = row.len();
    let at = |i: isize| row[i.rem_euclid(k as isize) as usize];
    let mut peaks = Vec::new();
    for i in 0..k as isize {
        let h = at(i);
        if !(h > at(i - 1)) {
            continue;
        }
        let mut j = i;
        while j - i < k as isize - 1 && at(j + 1) == h {
            j += 1;
        }
        if !(at(j + 1) < h) {
            continue;
        }
        let prominence = h - prominence_base(row, i, j, h);
        if prominence < min_prominence {
            continue;
        }
        let (pos, height) = if i == j {
            let (ym, y0, yp) = (at(i - 1), h, at(i + 1));
            let denom = ym - 2.0 * y0 + yp;
            let off = if denom < 0.0 {
                (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            (i as f64 + off, y0 - 0.25 * (ym - yp) * off)
        } else {
            (0.5 * (i + j) as f64, h)
        };
        peaks.push((wrap(pos, k as f64), prominence, height));
    }
    peaks
}

fn prominence_base(row: &[f64], first: isize, last: isize, h: f64) -> f64 {
    let k = row.len() as isize;
    let at = |i: isize| row[i.rem_euclid(k) as usize];
    let span = last - first + 1;
    let mut left = f64::INFINITY;
    for s in 1..=(k - span) {
        let v = at(first - s);
        if v > h {
            break;
        }
        left = left.min(v);
    }
    let mut right = f64::INFINITY;
    for s in 1..=(k - span) {
        let v = at(last + s);
        if v > h {
            break;
        }
        right = right.min(v);
    }
    left.max(right)
}

/// Options for [`cluster_waves`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterOptions {
    /// Gaussian kernel width in pixels.
    pub kernel_scale: f64,
    /// Multiplier on row distance; `None` uses `n_space / rows spanned`.
    pub time_scale: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
}

impl ClusterOptions {
    pub fn new(kernel_scale: f64) -> Self {
        Self {
            kernel_scale,
            time_scale: None,
            seed: 0,
            restarts: 10,
        }
    }
}

/// Normalized affinity `D^-1/2 A D^-1/2` and the effective time scale.
fn normalized_affinity(points: &[PeakPoint], n_space: usize, opts: &ClusterOptions) -> DMatrix<f64> {
    let n = points.len();
    let k = n_space as f64;
    let tmin = points.iter().map(|p| p.t_index).min().unwrap_or(0);
    let tmax = points.iter().map(|p| p.t_index).max().unwrap_or(0);
    let scale = opts
        .time_scale
        .unwrap_or_else(|| k / (tmax - tmin + 1) as f64);
    let two_s2 = 2.0 * opts.kernel_scale * opts.kernel_scale;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = circ_dist(points[i].x_index, points[j].x_index, k);
            let dt = (points[i].t_index as f64 - points[j].t_index as f64) * scale;
            let w = (-(dx * dx + dt * dt) / two_s2).exp();
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

/// Eigenpairs of the normalized affinity sorted by descending eigenvalue.
fn leading_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Groups peak points into `n_waves` tracks by normalized spectral clustering.
///
/// Affinity is `exp(-d^2 / (2 s^2))` with `d` combining circular distance in
/// `x` and scaled distance in `t`; the leading `n_waves` eigenvectors are row
/// normalized and split by seeded k-means. Tracks are labelled in order of
/// their earliest point.
pub fn cluster_waves(
    points: &[PeakPoint],
    n_waves: usize,
    n_space: usize,
    opts: &ClusterOptions,
) -> Result<Vec<WaveTrack>> {
    if n_waves == 0 {
        return Err(invalid("n_waves", "must be at least 1"));
    }
    if points.is_empty() || n_waves > points.len() {
        return Err(Error::TooFewPoints {
            needed: n_waves.max(1),
            found: points.len(),
        });
    }
    if !(opts.kernel_scale > 0.0) {
        return Err(invalid("kernel_scale", format!("must be > 0, got {}", opts.kernel_scale)));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.t_index.cmp(&b.t_index).then(a.x_index.total_cmp(&b.x_index)));
    let labels = if n_waves == 1 {
        vec![0; sorted.len()]
    } else {
        let m = normalized_affinity(&sorted, n_space, opts);
        let (_, vecs) = leading_eigen(m);
        let n = sorted.len();
        let mut embed: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n_waves).map(|c| vecs[(i, c)]).collect())
            .collect();
        for row in embed.iter_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        kmeans(&embed, n_waves, opts.seed, opts.restarts.max(1))
    };
    // relabel by first appearance in (t, x) order
    let mut remap = vec![usize::MAX; n_waves];
    let mut next = 0;
    for &l in &labels {
        if remap[l] == usize::MAX {
            remap[l] = next;
            next += 1;
        }
    }
    let mut tracks: Vec<WaveTrack> = (0..n_waves)
        .map(|label| WaveTrack {
            label,
            points: Vec::new(),
            unwrapped_x: Vec::new(),
        })
        .collect();
    for (p, &l) in sorted.iter().zip(&labels) {
        tracks[remap[l]].points.push(*p);
    }
    Ok(tracks
        .into_iter()
        .map(|t| unwrap_track(&t, n_space as f64))
        .collect())
}

/// Suggests a wave count from the largest gap among the leading eigenvalues
/// of the normalized affinity (`1..=max_waves`).
pub fn suggest_n_waves(
    points: &[PeakPoint],
    n_space: usize,
    opts: &ClusterOptions,
    max_waves: usize,
) -> Result<usize> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: points.len(),
        });
    }
    let m = normalized_affinity(points, n_space, opts);
    let (vals, _) = leading_eigen(m);
    let upto = max_waves.min(vals.len() - 1).max(1);
    let mut best = 1;
    let mut gap = f64::NEG_INFINITY;
    for c in 1..=upto {
        let g = vals[c - 1] - vals[c];
        if g > gap {
            gap = g;
            best = c;
        }
    }
    Ok(best)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with k-means++ seeding; best of `restarts` runs by inertia.
fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for run in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        centers.push(data[rng.random_range(0..data.len())].clone());
        while centers.len() < k {
            let d: Vec<f64> = data
                .iter()
                .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d.iter().sum();
            let idx = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut pick = data.len() - 1;
                for (i, &w) in d.iter().enumerate() {
                    if target < w {
                        pick = i;
                        break;
                    }
                    target -= w;
                }
                pick
            } else {
                rng.random_range(0..data.len())
            };
            centers.push(data[idx].clone());
        }
        let mut labels = vec![0usize; data.len()];
        for iter in 0..200 {
            let mut changed = false;
            for (i, p) in data.iter().enumerate() {
                let mut bl = 0;
                let mut bd = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = sq_dist(p, center);
                    if d < bd {
                        bd = d;
                        bl = c;
                    }
                }
                changed |= labels[i] != bl;
                labels[i] = bl;
            }
            let dim = data[0].len();
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> =
                    data.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    continue;
                }
                for d in 0..dim {
                    center[d] = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                }
            }
            if !changed && iter > 0 {
                break;
            }
        }
        let inertia: f64 = data
            .iter()
            .zip(&labels)
            .map(|(p, &l)| sq_dist(p, &centers[l]))
            .sum();
        if best.as_ref().map_or(true, |(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

/// Continues positions across the periodic seam: each step is the
/// minimal-magnitude representative of the raw difference modulo `period`.
pub fn unwrap_track(track: &WaveTrack, period: f64) -> WaveTrack {
    let mut unwrapped = Vec::with_capacity(track.points.len());
    let mut prev: Option<(f64, f64)> = None;
    for p in &track.points {
        let u = match prev {
            None => p.x_index,
            Some((raw, un)) => un + circ_diff(p.x_index, raw, period),
        };
        unwrapped.push(u);
        prev = Some((p.x_index, u));
    }
    WaveTrack {
        label: track.label,
        points: track.points.clone(),
        unwrapped_x: unwrapped,
    }
}

/// Options for [`follow_tracks`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FollowOptions {
    /// Maximum distance (px) between a point and a wave's predicted position.
    pub gate: f64,
    /// Number of most recent points used for the local linear prediction.
    pub history: usize,
}

impl Default for FollowOptions {
    fn default() -> Self {
        Self {
            gate: 3.0,
            history: 20,
        }
    }
}

/// Extends seed tracks through later rows by gated nearest-prediction association.
///
/// Each wave is predicted from a line through its last `history` points. A
/// point joins a wave only if that wave is the single one whose prediction
/// lies within `gate`; points near several predictions (crossing fronts) are
/// left out so that no wave inherits another's positions. Rows at or before
/// the last seed row are not revisited.
pub fn follow_tracks(
    points: &[PeakPoint],
    seeds: &[WaveTrack],
    n_space: usize,
    opts: &FollowOptions,
) -> Result<Vec<WaveTrack>> {
    if seeds.iter().any(|s| s.is_empty()) {
        return Err(Error::TooFewPoints { needed: 1, found: 0 });
    }
    if !(opts.gate > 0.0) || opts.history < 2 {
        return Err(invalid("follow options", "gate must be > 0 and history >= 2"));
    }
    let k = n_space as f64;
    let start = seeds
        .iter()
        .filter_map(|s| s.points.last().map(|p| p.t_index))
        .max()
        .unwrap_or(0);
    let mut tracks: Vec<WaveTrack> = seeds.iter().map(|s| unwrap_track(s, k)).collect();
    let mut by_row: Vec<(usize, Vec<PeakPoint>)> = Vec::new();
    for p in points.iter().filter(|p| p.t_index > start) {
        match by_row.last_mut() {
            Some((t, v)) if *t == p.t_index => v.push(*p),
            _ => by_row.push((p.t_index, vec![*p])),
        }
    }
    by_row.sort_by_key(|(t, _)| *t);
    for (t, row) in by_row {
        let predictions: Vec<f64> = tracks
            .iter()
            .map(|tr| {
                let n = tr.len();
                let from = n.saturating_sub(opts.history);
                let (a, b) = line_fit(
                    tr.points[from..]
                        .iter()
                        .zip(&tr.unwrapped_x[from..])
                        .map(|(p, &x)| (p.t_index as f64, x)),
                )
                .unwrap_or((0.0, 0.0));
                a + b * t as f64
            })
            .collect();
        let mut claim: Vec<Option<(f64, PeakPoint)>> = vec![None; tracks.len()];
        for p in &row {
            let near: Vec<usize> = predictions
                .iter()
                .enumerate()
                .filter(|(_, &pred)| circ_dist(p.x_index, pred, k) <= opts.gate)
                .map(|(w, _)| w)
                .collect();
            if near.len() != 1 {
                continue;
            }
            let w = near[0];
            let d = circ_dist(p.x_index, predictions[w], k);
            if claim[w].map_or(true, |(bd, _)| d < bd) {
                claim[w] = Some((d, *p));
            }
        }
        for (w, c) in claim.into_iter().enumerate() {
            if let Some((_, p)) = c {
                let tr = &mut tracks[w];
                let un = predictions[w] + circ_diff(p.x_index, predictions[w], k);
                tr.points.push(p);
                tr.unwrapped_x.push(un);
            }
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_from_rows(rows: &[Vec<f64>]) -> SpatiotemporalField {
        let k = rows[0].len();
        let mut v = Vec::new();
        for r in rows {
            v.extend_from_slice(r);
        }
        let n = rows.len().max(2);
        if rows.len() == 1 {
            v.extend_from_slice(&rows[0]);
        }
        SpatiotemporalField::new(v, n, k, 1.0).unwrap()
    }

    #[test]
    fn constant_rows_have_no_peaks() {
        let f = SpatiotemporalField::new(vec![2.0; 40], 4, 10, 1.0).unwrap();
        assert!(detect_ridges(&f, 0.0, 1).unwrap().is_empty());
    }

    #[test]
    fn plateau_peak_reports_midpoint() {
        let f = field_from_rows(&[vec![0.0, 1.0, 3.0, 3.0, 3.0, 1.0, 0.0, 0.0]]);
        let p = detect_ridges(&f, 0.5, 1).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].x_index, 3.0);
        assert_eq!(p[0].intensity, 3.0);
    }

    #[test]
    fn peak_across_seam_is_found() {
        let f = field_from_rows(&[vec![5.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 4.0]]);
        let p = detect_ridges(&f, 1.0, 1).unwrap();
        assert_eq!(p.len(), 2);
        let x = p[0].x_index;
        assert!(x < 0.5 || x > 7.5, "x = {x}");
    }

    #[test]
    fn prominence_and_separation_filters() {
        // main peak 10 at 2, small bump 1.2 at 6 over a 1.0 shoulder
        let row = vec![0.0, 5.0, 10.0, 5.0, 1.0, 1.0, 1.2, 1.0, 0.0, 0.0];
        let f = field_from_rows(&[row.clone()]);
        assert_eq!(detect_ridges(&f, 0.1, 1).unwrap().len(), 2 * 2);
        assert_eq!(detect_ridges(&f, 0.5, 1).unwrap().len(), 2);
        assert_eq!(detect_ridges(&f, 0.1, 5).unwrap().len(), 2);
    }

    #[test]
    fn rejects_zero_separation() {
        let f = SpatiotemporalField::zeros(2, 4, 1.0).unwrap();
        assert!(detect_ridges(&f, 0.0, 0).is_err());
    }

    #[test]
    fn unwrap_identity_and_seam() {
        let mk = |xs: &[f64]| WaveTrack {
            label: 0,
            points: xs
                .iter()
                .enumerate()
                .map(|(t, &x)| PeakPoint {
                    t_index: t,
                    x_index: x,
                    intensity: 1.0,
                })
                .collect(),
            unwrapped_x: vec![],
        };
        let t = unwrap_track(&mk(&[1.0, 2.0, 3.5]), 10.0);
        assert_eq!(t.unwrapped_x, vec![1.0, 2.0, 3.5]);
        let t = unwrap_track(&mk(&[8.0, 9.5, 1.0, 2.5]), 10.0);
        assert_eq!(t.unwrapped_x, vec![8.0, 9.5, 11.0, 12.5]);
        let t = unwrap_track(&mk(&[1.0, 9.0]), 10.0);
        assert_eq!(t.unwrapped_x, vec![1.0, -1.0]);
    }

    #[test]
    fn cluster_errors() {
        let p = [PeakPoint {
            t_index: 0,
            x_index: 1.0,
            intensity: 1.0,
        }];
        assert!(cluster_waves(&p, 2, 10, &ClusterOptions::new(1.0)).is_err());
        assert!(cluster_waves(&[], 1, 10, &ClusterOptions::new(1.0)).is_err());
        assert!(cluster_waves(&p, 0, 10, &ClusterOptions::new(1.0)).is_err());
    }
}
