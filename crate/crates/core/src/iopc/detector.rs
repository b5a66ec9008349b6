use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ap::DetBox;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::pipeline::GroundTruthBundle;
use crate::seed;

/// Per-frame side information. Real detectors look only at the image;
/// the synthetic detector reads the corruption ground truth.
#[derive(Clone, Copy, Debug)]
pub struct FrameContext<'a> {
    pub image_id: &'a str,
    pub truth: Option<&'a GroundTruthBundle>,
    pub gt_boxes: &'a [DetBox],
}

pub trait Detector: Send + Sync {
    fn id(&self) -> &str;
    fn detect(&self, image: &GrayImage, ctx: &FrameContext<'_>) -> Result<Vec<DetBox>>;
    /// Whether `detect` may run on several frames at once.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Blur response centre and width of the synthetic detector.
const BLUR_CENTER: f64 = 0.45;
const BLUR_WIDTH: f64 = 0.07;
/// Noise level (DN) at which quality falls to 1/e.
const NOISE_SCALE: f64 = 80.0;

fn logistic(m: f64) -> f64 {
    1.0 / (1.0 + (-(m - BLUR_CENTER) / BLUR_WIDTH).exp())
}

/// Detection quality in `[0, 1]`: a steep logistic in MTF (at 0.1
/// lines/px) times a gentle exponential decay in noise sigma.
pub fn detection_quality(sigma: f64, mtf: f64) -> f64 {
    let b = logistic(mtf.clamp(0.0, 1.0)) / logistic(1.0);
    let n = (-sigma.max(0.0) / NOISE_SCALE).exp();
    (b * n).clamp(0.0, 1.0)
}

/// Desk-scale detector stand-in. Each ground-truth box is found with
/// probability `q = detection_quality(sigma, mtf)` and confidence
/// `q (0.9 + 0.1 u)`; with probability `(1 - q) / 2` per box a false
/// positive with confidence `0.95 q u` appears at a random position.
pub fn synthetic_detections(gt_boxes: &[DetBox], sigma: f64, mtf: f64, bounds: (f64, f64), seed: u64) -> Vec<DetBox> {
    let q = detection_quality(sigma, mtf);
    let mut rng = seed::rng(seed);
    let mut out = Vec::new();
    for g in gt_boxes {
        let hit: f64 = rng.random();
        let u: f64 = rng.random();
        let (jx, jy): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if hit < q {
            let s = 0.05 * (1.0 - q);
            out.push(DetBox::detection(
                &g.class,
                g.x + jx * s * g.w,
                g.y + jy * s * g.h,
                g.w,
                g.h,
                q * (0.9 + 0.1 * u),
            ));
        }
        let fp: f64 = rng.random();
        let (fx, fy, fu): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        if fp < 0.5 * (1.0 - q) {
            let x = fx * (bounds.0 - g.w).max(0.0);
            let y = fy * (bounds.1 - g.h).max(0.0);
            let cand = DetBox::detection(&g.class, x, y, g.w, g.h, 0.95 * q * fu);
            if gt_boxes.iter().all(|t| t.iou(&cand) < 0.5) {
                out.push(cand);
            }
        }
    }
    out
}

/// [`synthetic_detections`] driven by the frame's ground-truth bundle.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticDetector {
    pub seed: u64,
    /// Frequency at which the bundle's MTF is read.
    pub frequency: f64,
}

impl SyntheticDetector {
    pub fn new(seed: u64) -> Self {
        Self { seed, frequency: 0.1 }
    }
}

impl Detector for SyntheticDetector {
    fn id(&self) -> &str {
        "synthetic"
    }

    fn detect(&self, image: &GrayImage, ctx: &FrameContext<'_>) -> Result<Vec<DetBox>> {
        let truth = ctx.truth.ok_or(Error::NoGroundTruth)?;
        let mtf = truth.combined_mtf().mean_at(self.frequency);
        Ok(synthetic_detections(
            ctx.gt_boxes,
            truth.total_sigma(),
            mtf,
            (image.width() as f64, image.height() as f64),
            seed::derive(self.seed, seed::hash_str(ctx.image_id)),
        ))
    }
}

/// One line of the JSON-lines interchange format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetRecord {
    pub image: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl DetRecord {
    pub fn from_box(image: &str, b: &DetBox) -> Self {
        Self {
            image: image.into(),
            class: b.class.clone(),
            bbox: [b.x, b.y, b.w, b.h],
            confidence: b.confidence,
        }
    }

    pub fn to_box(&self) -> DetBox {
        let [x, y, w, h] = self.bbox;
        DetBox {
            class: self.class.clone(),
            x,
            y,
            w,
            h,
            confidence: self.confidence,
        }
    }
}

/// Parse JSON-lines records; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<DetRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn to_jsonl(records: &[DetRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Detections produced elsewhere, replayed by image id.
#[derive(Clone, Debug, Default)]
pub struct RecordedDetections {
    by_image: BTreeMap<String, Vec<DetBox>>,
}

impl RecordedDetections {
    pub fn from_records(records: &[DetRecord]) -> Self {
        let mut by_image: BTreeMap<String, Vec<DetBox>> = BTreeMap::new();
        for r in records {
            by_image.entry(r.image.clone()).or_default().push(r.to_box());
        }
        Self { by_image }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_records(&parse_jsonl(&text)?))
    }
}

impl Detector for RecordedDetections {
    fn id(&self) -> &str {
        "recorded"
    }

    fn detect(&self, _image: &GrayImage, ctx: &FrameContext<'_>) -> Result<Vec<DetBox>> {
        Ok(self.by_image.get(ctx.image_id).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iopc::average_precision;

    fn gts() -> Vec<DetBox> {
        (0..20).map(|i| DetBox::truth("car", 20.0 * i as f64, 10.0, 15.0, 15.0)).collect()
    }

    #[test]
    fn clean_detects_everything() {
        let d = synthetic_detections(&gts(), 0.0, 1.0, (400.0, 400.0), 5);
        let tps: Vec<&DetBox> = d.iter().filter(|x| x.confidence.unwrap() >= 0.9).collect();
        assert_eq!(tps.len(), 20);
        assert_eq!(average_precision(&d, &gts(), 0.5), 1.0);
    }

    #[test]
    fn blur_dominates_noise() {
        assert!(detection_quality(0.0, 0.2) < detection_quality(25.0, 1.0));
        let count = |s: f64, m: f64| -> usize {
            (0..50).map(|k| synthetic_detections(&gts(), s, m, (400.0, 400.0), k).len()).sum()
        };
        assert!(count(0.0, 0.2) < count(25.0, 1.0));
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![
            DetRecord::from_box("a.png", &DetBox::detection("car", 1.0, 2.0, 3.0, 4.0, 0.5)),
            DetRecord::from_box("a.png", &DetBox::truth("car", 5.0, 6.0, 7.0, 8.0)),
        ];
        let text = to_jsonl(&recs).unwrap();
        assert_eq!(parse_jsonl(&text).unwrap(), recs);
        let det = RecordedDetections::from_records(&recs);
        let img = GrayImage::constant(4, 4, 0.0).unwrap();
        let ctx = FrameContext { image_id: "a.png", truth: None, gt_boxes: &[] };
        assert_eq!(det.detect(&img, &ctx).unwrap().len(), 2);
        let ctx = FrameContext { image_id: "b.png", ..ctx };
        assert!(det.detect(&img, &ctx).unwrap().is_empty());
    }
}
