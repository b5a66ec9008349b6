//! Desk-scale experiment recipes and the simulated camera used by the
//! control loop.
//!
//! Every recipe is a pure function of its [`ReproduceConfig`]; the
//! artifacts it returns are byte-identical across runs and thread counts.

use serde::{Deserialize, Serialize};

use crate::control::{alpha_for_target, decide, ActionRecord, CalibrationTable, CameraBounds, CameraState, CONTROL_FREQUENCY};
use crate::division::{divide_mtf, min_envelope_over_time, DivisionGuard};
use crate::error::{Error, Result};
use crate::estimate::{BlurInput, Registry};
use crate::image::{tile_patches, GrayImage, BLUR_PATCH};
use crate::iopc::{average_precision, build_iopc, patch_estimates, BuildConfig, Detector, Frame, FrameContext, GridPoint, Iopc, SyntheticDetector};
use crate::metrics::{amae, amae_partial, expected_amae, median, robust_stats};
use crate::mtf::{kernel_mtf, MtfReading, MtfSamples};
use crate::noise::NoiseSource;
use crate::pipeline::{corrupt_pipeline, BlurSpec, Recipe, Stage};
use crate::estimate::DEFAULT_ALPHA;
use crate::scene::{patch_kind_cycle, power_law_texture, synthetic_patch, synthetic_scene};
use crate::seed;

/// Recipe ids accepted by [`reproduce`].
pub const RECIPES: [&str; 4] = ["table2", "fig8-noise", "fig9-heat", "fig10-walkthrough"];

const SCENE_SIZE: usize = 384;
const SCENE_OBJECTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproduceConfig {
    pub seed: u64,
    /// Synthetic scenes per experiment.
    pub scenes: usize,
    /// Synthetic 128x128 patches per noise level.
    pub patches: usize,
}

impl ReproduceConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scenes: 8,
            patches: 50,
        }
    }
}

/// One output file of a recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub body: String,
}

impl Artifact {
    fn new(name: &str, body: String) -> Self {
        Self {
            name: name.into(),
            body,
        }
    }
}

pub fn reproduce(id: &str, cfg: &ReproduceConfig) -> Result<Vec<Artifact>> {
    if cfg.scenes == 0 || cfg.patches == 0 {
        return Err(Error::InvalidParameter("scenes and patches must be positive".into()));
    }
    match id {
        "table2" => Ok(vec![Artifact::new("table2.csv", table2_csv(&table2(cfg)?))]),
        "fig8-noise" => Ok(vec![Artifact::new("fig8_noise.csv", fig8_csv(&fig8_noise(cfg)?))]),
        "fig9-heat" => {
            let (iopc, trace) = heat_iopc(cfg, 0.1, MtfReading::Mean)?;
            Ok(vec![
                Artifact::new("fig9_heat.csv", iopc.to_csv_matrix()),
                Artifact::new("fig9_points.csv", grid_points_csv(&trace)),
            ])
        }
        "fig10-walkthrough" => Ok(vec![Artifact::new(
            "fig10_walkthrough.json",
            serde_json::to_string_pretty(&walkthrough(cfg)?)?,
        )]),
        _ => Err(Error::InvalidParameter(format!(
            "unknown recipe `{id}` (expected one of {})",
            RECIPES.join(", ")
        ))),
    }
}

/// `n` annotated synthetic scenes, frame `i` seeded by `derive(root, i)`.
pub fn scene_frames(n: usize, root: u64) -> Result<Vec<Frame>> {
    (0..n)
        .map(|i| {
            let s = synthetic_scene(SCENE_SIZE, SCENE_SIZE, SCENE_OBJECTS, seed::derive(root, i as u64))?;
            Ok(Frame::from_scene(format!("scene-{i:03}"), s))
        })
        .collect()
}

// ---------------------------------------------------------------- table 2

/// Sharp power-law textures with the slope the spectral estimator assumes.
fn texture_frames(n: usize, root: u64) -> Result<Vec<Frame>> {
    (0..n)
        .map(|i| {
            let image = power_law_texture(SCENE_SIZE, SCENE_SIZE, DEFAULT_ALPHA, 128.0, 20.0, seed::derive(root, i as u64))?;
            Ok(Frame {
                id: format!("texture-{i:03}"),
                image,
                boxes: Vec::new(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub d1: usize,
    pub sigma: f64,
    /// Errors over the scored frequencies; `None` when none qualify.
    pub mae_h: Option<f64>,
    pub mae_v: Option<f64>,
    pub amae: Option<f64>,
    pub expected_amae: f64,
    /// Frequencies scored.
    pub recovered: usize,
}

pub const TABLE2_D1: [usize; 2] = [3, 11];
pub const TABLE2_SIGMA: [f64; 2] = [10.0, 25.0];
pub const TABLE2_D2: usize = 7;

fn mb1(d: usize) -> BlurSpec {
    BlurSpec::LinearMotion {
        length: d as f64,
        angle_deg: 90.0,
    }
}

fn mb2() -> BlurSpec {
    BlurSpec::LinearMotion {
        length: TABLE2_D2 as f64,
        angle_deg: 45.0,
    }
}

/// Spectral estimate of every scene after `recipe`, one batch per scene.
fn scene_estimates(frames: &[Frame], recipe: &Recipe, registry: &Registry, root: u64) -> Result<Vec<MtfSamples>> {
    let est = registry.blur("mtf-spectral")?;
    let mut out = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let (img, _) = corrupt_pipeline(&f.image, recipe, seed::derive(root, i as u64))?;
        let tiles = tile_patches(&img, BLUR_PATCH, BLUR_PATCH)?;
        match est.estimate(BlurInput {
            patches: &tiles,
            truth: None,
        }) {
            Ok(e) => out.push(e.mtf),
            Err(Error::InsufficientTexture) => continue,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientTexture);
    }
    Ok(out)
}

fn mean_amae(estimates: &[MtfSamples], gt: &MtfSamples) -> Result<f64> {
    let mut s = 0.0;
    for e in estimates {
        s += amae(e, gt)?.amae;
    }
    Ok(s / estimates.len() as f64)
}

/// Linear motion `MB1` (vertical), DCSN, then a known diagonal `MB2` of
/// 7 px, on sharp power-law textures. The combined MTF is estimated per scene, reduced to its minimum
/// envelope over scenes, and divided by the known MTF of `MB2`. The
/// expected error propagates the isolated estimation errors of both blurs.
pub fn table2(cfg: &ReproduceConfig) -> Result<Vec<Table2Row>> {
    let registry = Registry::builtin();
    let frames = texture_frames(cfg.scenes, seed::derive(cfg.seed, 0x7AB2))?;
    let gt2 = kernel_mtf(&mb2().kernel(0)?);
    let iso2 = scene_estimates(&frames, &Recipe::blur_only(mb2()), &registry, seed::derive(cfg.seed, 2))?;
    let a2 = mean_amae(&iso2, &gt2)?;
    let mut rows = Vec::new();
    for (k, &d1) in TABLE2_D1.iter().enumerate() {
        let gt1 = kernel_mtf(&mb1(d1).kernel(0)?);
        let iso1 = scene_estimates(&frames, &Recipe::blur_only(mb1(d1)), &registry, seed::derive_path(cfg.seed, &[1, k as u64]))?;
        let a1 = mean_amae(&iso1, &gt1)?;
        for (l, &sigma) in TABLE2_SIGMA.iter().enumerate() {
            let recipe = Recipe::blur_dcsn_blur(mb1(d1), sigma, mb2());
            let combined = scene_estimates(&frames, &recipe, &registry, seed::derive_path(cfg.seed, &[3, k as u64, l as u64]))?;
            let envelope = min_envelope_over_time(&combined)?;
            let guard = DivisionGuard::default();
            let div = divide_mtf(&envelope, &gt2, guard)?;
            // scoring keeps frequencies where, in both directions, the true
            // MTF of MB1 clears the guard and bounds the combined estimate
            let recovered = div.mask();
            let ok = |c: f64, g: f64| g > guard.epsilon && c <= g;
            let mask: [bool; 8] = std::array::from_fn(|i| {
                recovered[i] && ok(envelope.h[i], gt1.h[i]) && ok(envelope.v[i], gt1.v[i])
            });
            let score = if mask.iter().any(|m| *m) {
                Some(amae_partial(&div.filled(&gt1), &gt1, &mask)?)
            } else {
                None
            };
            rows.push(Table2Row {
                d1,
                sigma,
                mae_h: score.map(|s| s.mae_h),
                mae_v: score.map(|s| s.mae_v),
                amae: score.map(|s| s.amae),
                expected_amae: expected_amae(a1, a2),
                recovered: mask.iter().filter(|m| **m).count(),
            });
        }
    }
    Ok(rows)
}

pub fn table2_csv(rows: &[Table2Row]) -> String {
    let mut out = String::from("d1_px,sigma_dn,mae_h,mae_v,amae,expected_amae,recovered_frequencies\n");
    for r in rows {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{:.2},{}\n",
            r.d1,
            r.sigma,
            f(r.mae_h),
            f(r.mae_v),
            f(r.amae),
            r.expected_amae,
            r.recovered
        ));
    }
    out
}

// ---------------------------------------------------------------- fig 8

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnvelopeRow {
    pub estimator: String,
    pub noise: String,
    pub sigma: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub n: usize,
}

const FIG8_SIGMAS: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0];

/// Trimmed min/median/max of σ̂ per estimator, noise type and level on
/// mixed flat/textured patches.
pub fn fig8_noise(cfg: &ReproduceConfig) -> Result<Vec<NoiseEnvelopeRow>> {
    let registry = Registry::builtin();
    let kinds: [(&str, &[NoiseSource]); 4] = [
        ("photon", &[NoiseSource::Photon]),
        ("dcsn", &[NoiseSource::Dcsn]),
        ("readout", &[NoiseSource::Readout]),
        ("combined", &[NoiseSource::Photon, NoiseSource::Dcsn, NoiseSource::Readout]),
    ];
    let clean: Vec<GrayImage> = (0..cfg.patches)
        .map(|i| synthetic_patch(128, patch_kind_cycle(i), seed::derive_path(cfg.seed, &[8, i as u64])))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for id in ["bf", "pca"] {
        let est = registry.noise(id)?;
        for (k, (name, sources)) in kinds.iter().enumerate() {
            for (l, &sigma) in FIG8_SIGMAS.iter().enumerate() {
                let recipe = Recipe::new(vec![Stage::noise(sources, sigma)]);
                let mut values = Vec::with_capacity(clean.len());
                for (i, c) in clean.iter().enumerate() {
                    let img = if sigma > 0.0 {
                        corrupt_pipeline(c, &recipe, seed::derive_path(cfg.seed, &[9, k as u64, l as u64, i as u64]))?.0
                    } else {
                        c.clone()
                    };
                    values.push(est.estimate(&img.as_patch()?)?.sigma_hat);
                }
                let s = robust_stats(&values)?;
                rows.push(NoiseEnvelopeRow {
                    estimator: id.into(),
                    noise: (*name).into(),
                    sigma,
                    min: s.min,
                    median: s.median,
                    max: s.max,
                    n: s.n_samples,
                });
            }
        }
    }
    Ok(rows)
}

pub fn fig8_csv(rows: &[NoiseEnvelopeRow]) -> String {
    let mut out = String::from("estimator,noise,sigma_dn,min,median,max,n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3},{}\n",
            r.estimator, r.noise, r.sigma, r.min, r.median, r.max, r.n
        ));
    }
    out
}

// ---------------------------------------------------------------- fig 9

/// Sub-seed indices of the heat-map scenes, corruptions and detector.
pub const HEAT_FRAMES: u64 = 0x9EA7;
pub const HEAT_BUILD: u64 = 0x10C;
pub const HEAT_DETECTOR: u64 = 0xDE7;

/// IOPC of the synthetic detector over the default corruption grid, with
/// PCA noise estimates and oracle MTFs read at `frequency`.
pub fn heat_iopc(cfg: &ReproduceConfig, frequency: f64, reading: MtfReading) -> Result<(Iopc, Vec<GridPoint>)> {
    let frames = scene_frames(cfg.scenes, seed::derive(cfg.seed, HEAT_FRAMES))?;
    let build = BuildConfig {
        frequency,
        reading,
        seed: seed::derive(cfg.seed, HEAT_BUILD),
        ..BuildConfig::default()
    };
    build_iopc(&frames, &build, &Registry::builtin(), &SyntheticDetector::new(seed::derive(cfg.seed, HEAT_DETECTOR)))
}

/// IOPC in the control coordinate: MTF along the motion direction at
/// [`CONTROL_FREQUENCY`].
pub fn control_iopc(cfg: &ReproduceConfig) -> Result<Iopc> {
    Ok(heat_iopc(cfg, CONTROL_FREQUENCY, MtfReading::Worst)?.0)
}

pub fn grid_points_csv(points: &[GridPoint]) -> String {
    let mut out = String::from("sigma_dn,extent_px,sigma_median,mtf_median,ap,cell_sigma,cell_mtf\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{},{}\n",
            p.sigma, p.extent, p.sigma_median, p.mtf_median, p.ap, p.cell.0, p.cell.1
        ));
    }
    out
}

// ---------------------------------------------------------------- camera

/// Simulated camera: horizontal motion at constant speed, sensor noise
/// amplified by the gain, brightness proportional to `t_exp * iso`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimCamera {
    pub speed_px_per_s: f64,
    /// Sensor noise sigma at unit gain, excluding dark current.
    pub read_sigma: f64,
    /// Dark-current variance per second of exposure at unit gain.
    pub dark_variance_per_s: f64,
    /// State at which the clean scene has its nominal brightness.
    pub reference: CameraState,
}

impl Default for SimCamera {
    fn default() -> Self {
        Self {
            speed_px_per_s: 750.0,
            read_sigma: 3.0,
            dark_variance_per_s: 10.0,
            reference: CameraState {
                exposure_s: 0.028,
                iso: 1.0,
            },
        }
    }
}

impl SimCamera {
    pub fn blur_extent(&self, s: &CameraState) -> f64 {
        self.speed_px_per_s * s.exposure_s
    }

    /// Noise sigma including the dark-current term the controller ignores.
    pub fn sigma(&self, s: &CameraState) -> f64 {
        s.iso * (self.read_sigma.powi(2) + self.dark_variance_per_s * s.exposure_s).sqrt()
    }

    pub fn gain(&self, s: &CameraState) -> f64 {
        s.intensity() / self.reference.intensity()
    }

    /// Capture `scene` in state `s`.
    pub fn capture(&self, scene: &GrayImage, s: &CameraState, seed: u64) -> Result<(GrayImage, crate::pipeline::GroundTruthBundle)> {
        let d = self.blur_extent(s);
        let sigma = self.sigma(s).clamp(1.0, 30.0);
        let lit = scene.map(|v| v * self.gain(s));
        let blur = if d >= 1.0 {
            BlurSpec::LinearMotion { length: d, angle_deg: 0.0 }
        } else {
            BlurSpec::Identity
        };
        let mut stages = vec![Stage::blur(blur)];
        stages.push(Stage::noise(&[NoiseSource::Dcsn, NoiseSource::Readout], sigma));
        corrupt_pipeline(&lit, &Recipe::new(stages), seed)
    }
}

/// Median σ̂ (PCA) and M̂TF (oracle, control coordinate) of a capture.
fn measure(img: &GrayImage, truth: &crate::pipeline::GroundTruthBundle, frame: &Frame, registry: &Registry) -> Result<(f64, f64)> {
    let (s, m) = patch_estimates(
        img,
        Some(truth),
        &frame.boxes,
        &*registry.noise("pca")?,
        &*registry.blur("mtf-oracle")?,
        CONTROL_FREQUENCY,
        MtfReading::Worst,
    )?;
    Ok((median(&s)?, median(&m)?))
}

// ---------------------------------------------------------------- fig 10

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkState {
    pub label: String,
    pub exposure_s: f64,
    pub iso: f64,
    pub blur_px: f64,
    pub sigma_dn: f64,
    pub sigma_hat: f64,
    pub mtf_hat: f64,
    pub extent_hat: f64,
    pub predicted_ap: Option<f64>,
    pub detector_ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Walkthrough {
    pub target_extent_px: f64,
    pub alpha: f64,
    pub states: Vec<WalkState>,
    /// The controller's own choice from the second state.
    pub controller: ActionRecord,
}

/// Target blur extent of the walkthrough.
pub const WALK_TARGET_PX: f64 = 9.0;

/// Clean scene; 28 ms exposure with motion; exposure divided by α; gain
/// multiplied by α, where α brings the estimated extent to 9 px.
pub fn walkthrough(cfg: &ReproduceConfig) -> Result<Walkthrough> {
    let registry = Registry::builtin();
    let table = CalibrationTable::dense_motion()?;
    let iopc = control_iopc(cfg)?;
    let cam = SimCamera::default();
    let frame = scene_frames(1, seed::derive(cfg.seed, 0xF10))?.remove(0);
    let detector = SyntheticDetector::new(seed::derive(cfg.seed, 0xDE7));

    let observe = |label: &str, state: CameraState, clean: bool, k: u64| -> Result<WalkState> {
        let seed_k = seed::derive_path(cfg.seed, &[10, k]);
        let (img, truth) = if clean {
            corrupt_pipeline(&frame.image, &Recipe::blur_only(BlurSpec::Identity), seed_k)?
        } else {
            cam.capture(&frame.image, &state, seed_k)?
        };
        let (sigma_hat, mtf_hat) = measure(&img, &truth, &frame, &registry)?;
        let ctx = FrameContext {
            image_id: &frame.id,
            truth: Some(&truth),
            gt_boxes: &frame.boxes,
        };
        let dets = detector.detect(&img, &ctx)?;
        Ok(WalkState {
            label: label.into(),
            exposure_s: state.exposure_s,
            iso: state.iso,
            blur_px: if clean { 0.0 } else { cam.blur_extent(&state) },
            sigma_dn: if clean { 0.0 } else { cam.sigma(&state) },
            sigma_hat,
            mtf_hat,
            extent_hat: table.mtf_to_extent(mtf_hat),
            predicted_ap: iopc.lookup(sigma_hat, mtf_hat).ok(),
            detector_ap: average_precision(&dets, &frame.boxes, 0.5),
        })
    };

    let start = cam.reference;
    let clean = observe("clean", start, true, 0)?;
    let blurred = observe("motion", start, false, 1)?;
    let alpha = alpha_for_target(blurred.extent_hat, WALK_TARGET_PX)?;
    let shorter = CameraState::new(start.exposure_s / alpha, start.iso)?;
    let reduced = observe("shorter-exposure", shorter, false, 2)?;
    let amplified = observe("gain-compensated", CameraState::new(shorter.exposure_s, start.iso * alpha)?, false, 3)?;
    let controller = decide(&iopc, blurred.sigma_hat, blurred.mtf_hat, &table, start, &CameraBounds::default())?;
    Ok(Walkthrough {
        target_extent_px: WALK_TARGET_PX,
        alpha,
        states: vec![clean, blurred, reduced, amplified],
        controller,
    })
}

// ---------------------------------------------------------------- loop

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub scene: usize,
    pub before: CameraState,
    pub action: ActionRecord,
    pub sigma_hat_before: f64,
    pub mtf_hat_before: f64,
    pub sigma_hat_after: f64,
    pub mtf_hat_after: f64,
    /// AP looked up at the measured operating point before the action.
    pub ap_before: f64,
    /// AP looked up at the re-measured operating point after the action;
    /// `None` if it left the curve.
    pub ap_after: Option<f64>,
}

/// Random camera states on seeded scenes: measure, decide, apply,
/// re-capture and re-measure.
pub fn closed_loop(iopc: &Iopc, n: usize, root: u64) -> Result<Vec<LoopOutcome>> {
    use rand::Rng;
    let registry = Registry::builtin();
    let table = CalibrationTable::dense_motion()?;
    let cam = SimCamera::default();
    let bounds = CameraBounds::default();
    let frames = scene_frames(n, seed::derive(root, 0x1007))?;
    let mut rng = seed::rng(seed::derive(root, 0x57A7));
    let mut out = Vec::with_capacity(n);
    for (i, frame) in frames.iter().enumerate() {
        let before = CameraState::new(rng.random_range(0.005..0.027), rng.random_range(0.5..6.0))?;
        let (img, truth) = cam.capture(&frame.image, &before, seed::derive_path(root, &[i as u64, 0]))?;
        let (s0, m0) = measure(&img, &truth, frame, &registry)?;
        let action = decide(iopc, s0, m0, &table, before, &bounds)?;
        let after = CameraState::new(action.new_exposure_s, action.new_iso)?;
        let (img, truth) = cam.capture(&frame.image, &after, seed::derive_path(root, &[i as u64, 1]))?;
        let (s1, m1) = measure(&img, &truth, frame, &registry)?;
        out.push(LoopOutcome {
            scene: i,
            before,
            sigma_hat_before: s0,
            mtf_hat_before: m0,
            sigma_hat_after: s1,
            mtf_hat_after: m1,
            ap_before: iopc.lookup(s0, m0)?,
            ap_after: iopc.lookup(s1, m1).ok(),
            action,
        });
    }
    Ok(out)
}
