//! Seeded synthetic scenes: power-law textures and box-annotated objects.
//!
//! Natural images have amplitude spectra falling roughly as `1/f^α`; the
//! generators here shape white noise to that law so estimators see
//! realistic texture without any external dataset.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fft::{bin_freq, fft2};
use crate::image::GrayImage;
use crate::iopc::DetBox;
use crate::seed;

/// Zero-mean periodic texture with amplitude spectrum `|f|^-alpha`,
/// rescaled to standard deviation `std` and shifted to `mean`.
pub fn power_law_texture(width: usize, height: usize, alpha: f64, mean: f64, std: f64, seed: u64) -> Result<GrayImage> {
    let mut rng = seed::rng(seed);
    let mut buf: Vec<Complex<f64>> = (0..width * height)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    fft2(&mut buf, width, height, false);
    for y in 0..height {
        let fy = bin_freq(y, height);
        for x in 0..width {
            let fx = bin_freq(x, width);
            let f = fx.hypot(fy);
            buf[y * width + x] *= if f == 0.0 { 0.0 } else { f.powf(-alpha) };
        }
    }
    fft2(&mut buf, width, height, true);
    let re: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let m = re.iter().sum::<f64>() / re.len() as f64;
    let s = (re.iter().map(|v| (v - m).powi(2)).sum::<f64>() / re.len() as f64).sqrt();
    let k = if s > 0.0 { std / s } else { 0.0 };
    GrayImage::new(width, height, re.into_iter().map(|v| mean + k * (v - m)).collect())
}

/// Kind of synthetic test patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    Flat,
    Texture,
    /// Textured regions separated by flat ones.
    Mixed,
}

/// A square test patch of the given kind, clipped to `[0, 255]`.
pub fn synthetic_patch(size: usize, kind: PatchKind, seed: u64) -> Result<GrayImage> {
    Ok(raw_patch(size, kind, seed)?.map(|v| v.clamp(0.0, 255.0)))
}

fn raw_patch(size: usize, kind: PatchKind, seed: u64) -> Result<GrayImage> {
    let mut rng = seed::rng(seed::derive(seed, 0));
    let mean = rng.random_range(60.0..190.0);
    match kind {
        PatchKind::Flat => GrayImage::constant(size, size, mean),
        PatchKind::Texture => {
            let std = rng.random_range(8.0..25.0);
            power_law_texture(size, size, 1.6, mean, std, seed::derive(seed, 1))
        }
        PatchKind::Mixed => {
            let tex = power_law_texture(size, size, 1.6, 0.0, 20.0, seed::derive(seed, 1))?;
            let mask = power_law_texture(size, size, 2.5, 0.0, 1.0, seed::derive(seed, 2))?;
            let data = tex
                .data()
                .iter()
                .zip(mask.data())
                .map(|(t, m)| mean + t * (4.0 * m).clamp(0.0, 1.0))
                .collect();
            GrayImage::new(size, size, data)
        }
    }
}

/// Cycle of kinds used for mixed evaluation sets.
pub fn patch_kind_cycle(i: usize) -> PatchKind {
    [PatchKind::Flat, PatchKind::Texture, PatchKind::Mixed, PatchKind::Texture][i % 4]
}

/// Image with ground-truth object boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: GrayImage,
    pub boxes: Vec<DetBox>,
}

/// Object class used by the synthetic scenes.
pub const SCENE_CLASS: &str = "car";

/// A textured background with `objects` non-overlapping textured
/// rectangles, each annotated as a ground-truth box.
pub fn synthetic_scene(width: usize, height: usize, objects: usize, seed: u64) -> Result<Scene> {
    let mut img = power_law_texture(width, height, 1.8, 110.0, 18.0, seed::derive(seed, 0))?.into_data();
    let mut rng = seed::rng(seed::derive(seed, 1));
    let mut boxes: Vec<DetBox> = Vec::new();
    let mut tries = 0;
    while boxes.len() < objects && tries < 200 * objects.max(1) {
        tries += 1;
        let w = rng.random_range(32..=72usize).min(width - 8);
        let h = rng.random_range(24..=56usize).min(height - 8);
        let x = rng.random_range(4..=width - w - 4);
        let y = rng.random_range(4..=height - h - 4);
        let b = DetBox::truth(SCENE_CLASS, x as f64, y as f64, w as f64, h as f64);
        if boxes.iter().any(|o| o.iou(&b) > 0.0) {
            continue;
        }
        let level: f64 = rng.random_range(150.0..200.0);
        let tex = power_law_texture(w.next_power_of_two(), h.next_power_of_two(), 1.2, 0.0, 30.0, seed::derive_path(seed, &[2, boxes.len() as u64]))?;
        for j in 0..h {
            for i in 0..w {
                img[(y + j) * width + x + i] = level + tex.get(i, j);
            }
        }
        boxes.push(b);
    }
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 255.0));
    Ok(Scene {
        image: GrayImage::new(width, height, img)?,
        boxes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::std_dev;

    #[test]
    fn texture_moments() {
        let t = power_law_texture(64, 64, 1.2, 100.0, 15.0, 3).unwrap();
        assert!((t.mean() - 100.0).abs() < 1e-9);
        assert!((std_dev(t.data()) - 15.0).abs() < 1e-9);
        assert_eq!(t, power_law_texture(64, 64, 1.2, 100.0, 15.0, 3).unwrap());
    }

    #[test]
    fn patch_kinds() {
        let f = synthetic_patch(128, PatchKind::Flat, 1).unwrap();
        assert!(std_dev(f.data()) < 1e-9);
        let m = synthetic_patch(128, PatchKind::Mixed, 1).unwrap();
        assert!(std_dev(m.data()) > 1.0);
    }

    #[test]
    fn scene_boxes_disjoint_and_inside() {
        let s = synthetic_scene(384, 384, 5, 7).unwrap();
        assert_eq!(s.boxes.len(), 5);
        for (i, a) in s.boxes.iter().enumerate() {
            assert!(a.x >= 0.0 && a.x + a.w <= 384.0 && a.y + a.h <= 384.0);
            for b in &s.boxes[i + 1..] {
                assert_eq!(a.iou(b), 0.0);
            }
        }
    }
}
