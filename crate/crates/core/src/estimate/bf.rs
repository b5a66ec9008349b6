//! Block selection plus adaptive Gaussian filtering.
//!
//! The patch is split into 8x16 blocks and the most homogeneous tenth is
//! kept. A Gaussian whose width follows the preliminary noise level
//! separates noise from residual structure; the high-pass residual's
//! standard deviation, corrected for the filter's own response and for the
//! low bias of picking the quietest blocks, is the estimate.

use std::sync::OnceLock;

use rand_distr::{Distribution, StandardNormal};

use super::{check_noise_patch, NoiseEstimate, NoiseEstimator};
use crate::error::Result;
use crate::image::{Patch, NOISE_PATCH};
use crate::seed;

const BLOCK_H: usize = 8;
const BLOCK_W: usize = 16;
const KEEP_FRACTION: f64 = 0.1;
const SIGMA_G_MIN: f64 = 0.8;
const SIGMA_G_STEPS: usize = 9;
const SIGMA_G_STEP: f64 = 0.1;
const CALIBRATION_PATCHES: u64 = 24;

#[derive(Clone, Copy, Debug, Default)]
pub struct BfEstimator;

impl NoiseEstimator for BfEstimator {
    fn id(&self) -> &str {
        "bf"
    }

    fn estimate(&self, patch: &Patch<'_>) -> Result<NoiseEstimate> {
        estimate_noise_bf(patch)
    }
}

pub fn estimate_noise_bf(patch: &Patch<'_>) -> Result<NoiseEstimate> {
    check_noise_patch(patch)?;
    let n = NOISE_PATCH;
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        data.extend_from_slice(patch.row(y));
    }
    let (raw, step) = residual_sigma(&data, None);
    Ok(NoiseEstimate {
        sigma_hat: raw / bias_table()[step],
        method: "bf".into(),
        origin: patch.origin(),
    })
}

fn sigma_g_of(step: usize) -> f64 {
    SIGMA_G_MIN + step as f64 * SIGMA_G_STEP
}

/// Filter width step for a preliminary sigma (DN).
fn step_for(prelim: f64) -> usize {
    let g = (0.8 + 0.03 * prelim).clamp(SIGMA_G_MIN, sigma_g_of(SIGMA_G_STEPS - 1));
    ((g - SIGMA_G_MIN) / SIGMA_G_STEP).round() as usize
}

fn gaussian_1d(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut g: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * (n as isize - 1);
    let m = i.rem_euclid(p);
    if m < n as isize {
        m as usize
    } else {
        (p - m) as usize
    }
}

/// Separable Gaussian smoothing of an `n x n` buffer with mirrored borders.
fn smooth(data: &[f64], n: usize, g: &[f64]) -> Vec<f64> {
    let r = (g.len() / 2) as isize;
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            tmp[y * n + x] = g
                .iter()
                .enumerate()
                .map(|(k, w)| w * data[y * n + reflect(x as isize + k as isize - r, n)])
                .sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            out[y * n + x] = g
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(y as isize + k as isize - r, n) * n + x])
                .sum();
        }
    }
    out
}

fn block_std(data: &[f64], n: usize, bx: usize, by: usize) -> f64 {
    let mut s = 0.0;
    let mut s2 = 0.0;
    for y in by * BLOCK_H..(by + 1) * BLOCK_H {
        for &v in &data[y * n + bx * BLOCK_W..y * n + (bx + 1) * BLOCK_W] {
            s += v;
            s2 += v * v;
        }
    }
    let m = (BLOCK_H * BLOCK_W) as f64;
    ((s2 - s * s / m) / m).max(0.0).sqrt()
}

/// Uncorrected-for-selection residual sigma and the filter step used.
/// `force_step` overrides the adaptive filter width.
fn residual_sigma(data: &[f64], force_step: Option<usize>) -> (f64, usize) {
    let n = NOISE_PATCH;
    let (nbx, nby) = (n / BLOCK_W, n / BLOCK_H);
    let mut blocks: Vec<(f64, usize, usize)> = (0..nby)
        .flat_map(|by| (0..nbx).map(move |bx| (bx, by)))
        .map(|(bx, by)| (block_std(data, n, bx, by), bx, by))
        .collect();
    // stable: equal spreads keep raster order
    blocks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = ((blocks.len() as f64) * KEEP_FRACTION).ceil() as usize;
    let kept = &blocks[..keep];
    let prelim = kept.iter().map(|b| b.0).sum::<f64>() / keep as f64;
    let step = force_step.unwrap_or_else(|| step_for(prelim));

    let g = gaussian_1d(sigma_g_of(step));
    let smoothed = smooth(data, n, &g);
    let c = g.len() / 2;
    let g0 = g[c] * g[c];
    let sum_sq = g.iter().map(|v| v * v).sum::<f64>().powi(2);
    let white_gain = (1.0 - 2.0 * g0 + sum_sq).sqrt();

    let mut ss = 0.0;
    let mut count = 0usize;
    for &(_, bx, by) in kept {
        let mut r = Vec::with_capacity(BLOCK_H * BLOCK_W);
        for y in by * BLOCK_H..(by + 1) * BLOCK_H {
            for x in bx * BLOCK_W..(bx + 1) * BLOCK_W {
                r.push(data[y * n + x] - smoothed[y * n + x]);
            }
        }
        let m = r.iter().sum::<f64>() / r.len() as f64;
        ss += r.iter().map(|v| (v - m).powi(2)).sum::<f64>();
        count += r.len();
    }
    // one degree of freedom per block mean
    let dof = (count - keep) as f64;
    ((ss / dof).sqrt() / white_gain, step)
}

/// Ratio of the raw estimate to the true sigma on pure white noise, per
/// filter step. Picking the quietest blocks biases the raw value low.
fn bias_table() -> &'static [f64; SIGMA_G_STEPS] {
    static TABLE: OnceLock<[f64; SIGMA_G_STEPS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = NOISE_PATCH;
        let fields: Vec<Vec<f64>> = (0..CALIBRATION_PATCHES)
            .map(|i| {
                let mut rng = seed::rng(seed::derive(0xBF_CA11B, i));
                (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect()
            })
            .collect();
        std::array::from_fn(|step| {
            fields.iter().map(|f| residual_sigma(f, Some(step)).0).sum::<f64>() / fields.len() as f64
        })
    })
}
