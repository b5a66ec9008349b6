use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ap::{average_precision, DetBox};
use super::curve::{Iopc, IopcMeta};
use super::detector::{Detector, FrameContext};
use crate::error::{Error, Result};
use crate::estimate::{BlurEstimator, BlurInput, NoiseEstimator, Registry};
use crate::image::{tile_patches, GrayImage, Patch, BLUR_PATCH, NOISE_PATCH};
use crate::metrics::median;
use crate::mtf::{kernel_mtf, MtfReading};
use crate::noise::NoiseSource;
use crate::pipeline::{corrupt_pipeline, BlurSpec, GroundTruthBundle, Recipe, Stage};
use crate::scene::Scene;
use crate::seed;

/// A clean annotated image.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: String,
    pub image: GrayImage,
    pub boxes: Vec<DetBox>,
}

impl Frame {
    pub fn from_scene(id: impl Into<String>, scene: Scene) -> Self {
        Self {
            id: id.into(),
            image: scene.image,
            boxes: scene.boxes,
        }
    }
}

/// Applied corruption levels: linear motion blur of each extent followed
/// by sensor noise of each sigma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionGrid {
    pub sigmas: Vec<f64>,
    /// Motion extents in pixels; 0 means no blur.
    pub extents: Vec<usize>,
    #[serde(default)]
    pub angle_deg: f64,
    pub noise_sources: Vec<NoiseSource>,
}

impl Default for CorruptionGrid {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            extents: vec![0, 3, 7, 11, 15, 21],
            angle_deg: 0.0,
            noise_sources: vec![NoiseSource::Dcsn, NoiseSource::Readout],
        }
    }
}

impl CorruptionGrid {
    pub fn blur(&self, extent: usize) -> BlurSpec {
        if extent == 0 {
            BlurSpec::Identity
        } else {
            BlurSpec::LinearMotion {
                length: extent as f64,
                angle_deg: self.angle_deg,
            }
        }
    }

    pub fn recipe(&self, sigma: f64, extent: usize) -> Recipe {
        let mut stages = vec![Stage::blur(self.blur(extent))];
        if sigma > 0.0 {
            stages.push(Stage::noise(&self.noise_sources, sigma));
        }
        Recipe::new(stages)
    }

    /// Ground-truth MTF at `frequency` of each extent's kernel.
    pub fn axis_mtf(&self, frequency: f64, reading: MtfReading) -> Result<Vec<f64>> {
        self.extents
            .iter()
            .map(|&d| Ok(kernel_mtf(&self.blur(d).kernel(0)?).read(frequency, reading)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub grid: CorruptionGrid,
    pub noise_estimator: String,
    pub blur_estimator: String,
    /// Frequency of the MTF axis.
    pub frequency: f64,
    #[serde(default)]
    pub reading: MtfReading,
    pub iou_threshold: f64,
    pub class: String,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            grid: CorruptionGrid::default(),
            noise_estimator: "pca".into(),
            blur_estimator: "mtf-oracle".into(),
            frequency: 0.1,
            reading: MtfReading::Mean,
            iou_threshold: 0.5,
            class: crate::scene::SCENE_CLASS.into(),
            seed: 0,
        }
    }
}

/// What happened at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub sigma: f64,
    pub extent: usize,
    pub sigma_median: f64,
    pub mtf_median: f64,
    pub ap: f64,
    pub cell: (usize, usize),
}

fn overlapping<'a>(patches: Vec<Patch<'a>>, boxes: &[DetBox]) -> Vec<Patch<'a>> {
    let hit: Vec<Patch<'a>> = patches
        .iter()
        .copied()
        .filter(|p| boxes.iter().any(|b| p.overlaps(b.rect())))
        .collect();
    if hit.is_empty() {
        patches
    } else {
        hit
    }
}

struct PointOutcome {
    sigmas: Vec<f64>,
    mtfs: Vec<f64>,
    dets: Vec<DetBox>,
    gts: Vec<DetBox>,
}

fn run_point(
    frames: &[Frame],
    cfg: &BuildConfig,
    registry: &Registry,
    detector: &dyn Detector,
    index: usize,
    sigma: f64,
    extent: usize,
) -> Result<PointOutcome> {
    let noise = registry.noise(&cfg.noise_estimator)?;
    let blur = registry.blur(&cfg.blur_estimator)?;
    let recipe = cfg.grid.recipe(sigma, extent);
    let mut out = PointOutcome {
        sigmas: Vec::new(),
        mtfs: Vec::new(),
        dets: Vec::new(),
        gts: Vec::new(),
    };
    for (fi, frame) in frames.iter().enumerate() {
        let frame_seed = seed::derive_path(cfg.seed, &[index as u64, fi as u64]);
        let (img, truth): (GrayImage, GroundTruthBundle) = corrupt_pipeline(&frame.image, &recipe, frame_seed)?;
        let gts: Vec<DetBox> = frame.boxes.iter().filter(|b| b.class == cfg.class).cloned().collect();
        let ctx = FrameContext {
            image_id: &frame.id,
            truth: Some(&truth),
            gt_boxes: &gts,
        };
        // frames are scored jointly; offset boxes so matches never cross images
        let shift = fi as f64 * 1e6;
        let shifted = |b: &DetBox| DetBox { x: b.x + shift, ..b.clone() };
        let dets = detector.detect(&img, &ctx)?;
        out.dets.extend(dets.iter().filter(|b| b.class == cfg.class).map(shifted));
        out.gts.extend(gts.iter().map(shifted));
        let (s, m) = patch_estimates(&img, Some(&truth), &gts, &*noise, &*blur, cfg.frequency, cfg.reading)?;
        out.sigmas.extend(s);
        out.mtfs.extend(m);
    }
    Ok(out)
}

/// Patch-wise σ̂ and M̂TF (read at `frequency`) over the noise and blur
/// tiles of `img` that overlap `boxes`, or over all tiles if none do.
pub fn patch_estimates(
    img: &GrayImage,
    truth: Option<&GroundTruthBundle>,
    boxes: &[DetBox],
    noise: &dyn NoiseEstimator,
    blur: &dyn BlurEstimator,
    frequency: f64,
    reading: MtfReading,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sigmas = Vec::new();
    for p in overlapping(tile_patches(img, NOISE_PATCH, NOISE_PATCH)?, boxes) {
        sigmas.push(noise.estimate(&p)?.sigma_hat);
    }
    let mut mtfs = Vec::new();
    for p in overlapping(tile_patches(img, BLUR_PATCH, BLUR_PATCH)?, boxes) {
        let e = blur.estimate(BlurInput {
            patches: std::slice::from_ref(&p),
            truth,
        })?;
        mtfs.push(e.mtf.read(frequency, reading));
    }
    Ok((sigmas, mtfs))
}

/// Corrupt every frame at every grid point, score the detector and bin
/// `(median σ̂, median M̂TF, AP)` into an IOPC whose axes are the applied
/// sigmas and the kernels' true MTF at `cfg.frequency`.
pub fn build_iopc(
    frames: &[Frame],
    cfg: &BuildConfig,
    registry: &Registry,
    detector: &dyn Detector,
) -> Result<(Iopc, Vec<GridPoint>)> {
    if frames.iter().all(|f| f.boxes.iter().all(|b| b.class != cfg.class)) {
        return Err(Error::Empty("ground-truth boxes"));
    }
    registry.noise(&cfg.noise_estimator)?;
    registry.blur(&cfg.blur_estimator)?;

    let mut mtf_axis = cfg.grid.axis_mtf(cfg.frequency, cfg.reading)?;
    mtf_axis.sort_by(f64::total_cmp);
    let mut sigma_axis = cfg.grid.sigmas.clone();
    sigma_axis.sort_by(f64::total_cmp);
    let mut iopc = Iopc::new(
        sigma_axis,
        mtf_axis,
        cfg.frequency,
        IopcMeta {
            detector: detector.id().into(),
            class: cfg.class.clone(),
            recipe: format!(
                "linear motion {:?} px at {} deg, then {:?} noise",
                cfg.grid.extents, cfg.grid.angle_deg, cfg.grid.noise_sources
            ),
            seed: cfg.seed,
        },
    )?;
    iopc.reading = cfg.reading;

    let points: Vec<(usize, f64, usize)> = cfg
        .grid
        .sigmas
        .iter()
        .flat_map(|&s| cfg.grid.extents.iter().map(move |&d| (s, d)))
        .enumerate()
        .map(|(i, (s, d))| (i, s, d))
        .collect();
    let run = |&(i, s, d): &(usize, f64, usize)| run_point(frames, cfg, registry, detector, i, s, d);
    let outcomes: Vec<Result<PointOutcome>> = if detector.concurrent() {
        points.par_iter().map(run).collect()
    } else {
        points.iter().map(run).collect()
    };

    let mut trace = Vec::with_capacity(points.len());
    for (&(_, sigma, extent), outcome) in points.iter().zip(outcomes) {
        let o = outcome?;
        let ap = average_precision(&o.dets, &o.gts, cfg.iou_threshold);
        let sigma_median = median(&o.sigmas)?;
        let mtf_median = median(&o.mtfs)?;
        let cell = iopc.insert(sigma_median, mtf_median, ap, 1)?;
        trace.push(GridPoint {
            sigma,
            extent,
            sigma_median,
            mtf_median,
            ap,
            cell,
        });
    }
    Ok((iopc, trace))
}
