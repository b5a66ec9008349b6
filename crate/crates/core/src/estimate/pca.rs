//! Principal-component noise estimation.
//!
//! Overlapping 8x8 blocks are treated as 64-dimensional samples. Image
//! structure concentrates in a few principal directions while white noise
//! spreads evenly over all of them, so the smallest covariance eigenvalues
//! carry the noise variance. Each sorted eigenvalue is compared with its
//! counterpart for unit white noise sampled the same way. Starting from
//! the smallest ratio, the noise variance is the pooled ratio over the
//! eigenvalues that do not exceed the current estimate, iterated to
//! convergence.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::{check_noise_patch, NoiseEstimate, NoiseEstimator};
use crate::error::Result;
use crate::image::{Patch, NOISE_PATCH};
use crate::seed;

const B: usize = 8;
const DIM: usize = B * B;
const STRIDE: usize = 4;
/// Eigenvalue ratios above this multiple of the current estimate are
/// treated as structure. The iteration starts from the smallest ratio.
const ACCEPT_FACTOR: f64 = 1.0;
const MAX_ITER: usize = 10;
const TOLERANCE: f64 = 0.01;
const NULL_PATCHES: u64 = 32;

#[derive(Clone, Copy, Debug, Default)]
pub struct PcaEstimator;

impl NoiseEstimator for PcaEstimator {
    fn id(&self) -> &str {
        "pca"
    }

    fn estimate(&self, patch: &Patch<'_>) -> Result<NoiseEstimate> {
        estimate_noise_pca(patch)
    }
}

pub fn estimate_noise_pca(patch: &Patch<'_>) -> Result<NoiseEstimate> {
    check_noise_patch(patch)?;
    let n = NOISE_PATCH;
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        data.extend_from_slice(patch.row(y));
    }
    let mu = sorted_eigenvalues(&data, n);
    Ok(NoiseEstimate {
        sigma_hat: tail_variance(&mu, null_spectrum()).max(0.0).sqrt(),
        method: "pca".into(),
        origin: patch.origin(),
    })
}

/// Ascending eigenvalues of the block covariance.
fn sorted_eigenvalues(data: &[f64], n: usize) -> Vec<f64> {
    let positions: Vec<usize> = (0..=n - B).step_by(STRIDE).collect();
    let count = positions.len() * positions.len();
    let mut rows = Vec::with_capacity(count * DIM);
    for &by in &positions {
        for &bx in &positions {
            for y in by..by + B {
                rows.extend_from_slice(&data[y * n + bx..y * n + bx + B]);
            }
        }
    }
    let mut x = DMatrix::from_row_slice(count, DIM, &rows);
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let cov = x.tr_mul(&x) / (count - 1) as f64;
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Noise variance from eigenvalues `mu` against the unit-noise spectrum `q`.
fn tail_variance(mu: &[f64], q: &[f64]) -> f64 {
    let ratio = |set: &[usize]| {
        let num: f64 = set.iter().map(|&i| mu[i]).sum();
        let den: f64 = set.iter().map(|&i| q[i]).sum();
        num / den
    };
    let all: Vec<usize> = (0..mu.len()).collect();
    let mut tau = ratio(&[0]);
    for _ in 0..MAX_ITER {
        let set: Vec<usize> = all.iter().copied().filter(|&i| mu[i] <= ACCEPT_FACTOR * tau * q[i]).collect();
        if set.is_empty() {
            break;
        }
        let next = ratio(&set);
        let converged = (next - tau).abs() <= TOLERANCE * tau;
        tau = next;
        if converged {
            break;
        }
    }
    tau
}

/// Expected ascending eigenvalues for unit-variance white noise.
fn null_spectrum() -> &'static [f64] {
    static Q: OnceLock<Vec<f64>> = OnceLock::new();
    Q.get_or_init(|| {
        let n = NOISE_PATCH;
        let mut acc = vec![0.0; DIM];
        for i in 0..NULL_PATCHES {
            let mut rng = seed::rng(seed::derive(0x9CA_0000, i));
            let f: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
            for (a, e) in acc.iter_mut().zip(sorted_eigenvalues(&f, n)) {
                *a += e;
            }
        }
        acc.iter().map(|a| a / NULL_PATCHES as f64).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;
    use crate::noise::{apply_noise, NoiseConfig, NoiseSource};

    #[test]
    fn white_noise_twenty() {
        for s in 0..4 {
            let img = GrayImage::constant(128, 128, 128.0).unwrap();
            let cfg = NoiseConfig::isolated(vec![NoiseSource::Readout], 20.0, 40 + s);
            let (noisy, _) = apply_noise(&img, &cfg).unwrap();
            let e = estimate_noise_pca(&noisy.as_patch().unwrap()).unwrap();
            assert!((19.0..=21.0).contains(&e.sigma_hat), "{}", e.sigma_hat);
        }
    }

    #[test]
    fn constant_patch_is_zero() {
        let img = GrayImage::constant(128, 128, 255.0).unwrap();
        assert_eq!(estimate_noise_pca(&img.as_patch().unwrap()).unwrap().sigma_hat, 0.0);
    }

    #[test]
    fn null_spectrum_is_ascending_around_one() {
        let q = null_spectrum();
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }
}
