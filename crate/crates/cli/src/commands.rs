use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use camcond::control::{
    decide_with, CalibrationTable, CameraState, TradeoffModel, CALIBRATION_EXTENTS, CONTROL_FREQUENCY,
};
use camcond::estimate::{BlurInput, Registry, MAX_BATCH};
use camcond::experiments::{
    fig8_csv, grid_points_csv, reproduce as run_recipe, scene_frames, NoiseEnvelopeRow, ReproduceConfig, HEAT_BUILD,
    HEAT_DETECTOR, HEAT_FRAMES, RECIPES,
};
use camcond::image::{load_gray, save_gray, tile_patches, write_atomic, BLUR_PATCH, NOISE_PATCH};
use camcond::iopc::{build_iopc, parse_jsonl, patch_estimates, BuildConfig, Frame, Iopc, SyntheticDetector};
use camcond::metrics::{amae, amae_table_csv, median, robust_stats, AmaeCell};
use camcond::mtf::MtfReading;
use camcond::pipeline::{corrupt_pipeline, GroundTruthBundle};
use camcond::{seed, Error};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{CameraConstants, RunConfig};
use crate::error::{config, data, CliResult};
use crate::Summary;

/// Ground truth written next to each corrupted image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub image: String,
    pub seed: u64,
    pub truth: GroundTruthBundle,
    pub run_config: Value,
}

impl Sidecar {
    pub fn path(dir: &Path, image_name: &str) -> PathBuf {
        dir.join(format!("{}.gt.json", stem(Path::new(image_name))))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
    }
}

const IMAGE_EXTS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Images in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| data(format!("{}: {e}", dir.display())))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if p.is_file() && ext.is_some_and(|e| IMAGE_EXTS.contains(&e.as_str())) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(data(format!("no PNG or PNM images in {}", dir.display())));
    }
    out.sort();
    Ok(out)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn csv_with_config(cfg: &RunConfig, body: &str) -> String {
    format!("# run_config={}\n{body}", cfg.to_json())
}

fn json_with_config(cfg: &RunConfig, mut v: Value) -> String {
    if let Value::Object(m) = &mut v {
        m.insert("run_config".into(), cfg.to_value());
    }
    let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
    s.push('\n');
    s
}

fn fmt_num(x: f64) -> String {
    let r = (x * 10.0).round() / 10.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.1}")
    }
}

/// Kernel kinds and sizes of a bundle, `+`-joined; `none` without blur.
fn blur_label(t: &GroundTruthBundle) -> (String, String, f64) {
    if t.kernels.is_empty() {
        return ("none".into(), "0".into(), 0.0);
    }
    let kinds: Vec<String> = t
        .kernels
        .iter()
        .map(|k| serde_json::to_value(k.meta.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect();
    let sizes: Vec<String> = t.kernels.iter().map(|k| fmt_num(k.meta.extent_px)).collect();
    (kinds.join("+"), sizes.join("+"), t.kernels[0].meta.extent_px)
}

fn noise_label(t: &GroundTruthBundle) -> String {
    let sources: BTreeSet<_> = t.noise.iter().flat_map(|n| n.sources.iter().copied()).collect();
    if sources.is_empty() {
        return "none".into();
    }
    let names: Vec<String> = sources
        .iter()
        .map(|s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect();
    names.join("+")
}

fn estimator_sets(cfg: &RunConfig, noise: &str, blur: &str) -> (Vec<String>, Vec<String>) {
    match (&cfg.noise, &cfg.blur) {
        (None, None) => (vec![noise.into()], vec![blur.into()]),
        (n, b) => (n.clone().unwrap_or_default(), b.clone().unwrap_or_default()),
    }
}

fn single(ids: &Option<Vec<String>>, default: &str, what: &str) -> CliResult<String> {
    match ids.as_deref() {
        None => Ok(default.into()),
        Some([id]) => Ok(id.clone()),
        Some(_) => Err(config(format!("exactly one {what} estimator expected"))),
    }
}

// ---------------------------------------------------------------- corrupt

pub fn corrupt(cfg: &RunConfig) -> CliResult<Summary> {
    let root = cfg.require_seed()?;
    let input = cfg.require_input()?;
    let output = cfg.require_output()?;
    let recipe = cfg
        .recipe
        .as_ref()
        .ok_or_else(|| config("missing recipe (--recipe or `recipe` in the config file)"))?;
    recipe.validate().map_err(|e| config(format!("recipe: {e}")))?;
    let files = list_images(input)?;
    ensure_dir(output)?;

    let mut stems = BTreeSet::new();
    let mut images = Vec::new();
    let mut coverage: BTreeMap<(String, String, String, String), usize> = BTreeMap::new();
    let mut outputs = Vec::new();
    for path in &files {
        let name = file_name(path);
        if !stems.insert(stem(path)) {
            return Err(data(format!("two inputs share the stem of `{name}`")));
        }
        let img = load_gray(path)?;
        let s = seed::derive(root, seed::hash_str(&name));
        let (out, truth) = corrupt_pipeline(&img, recipe, s)?;
        let out_path = output.join(&name);
        save_gray(&out, &out_path)?;
        let (kind, size, _) = blur_label(&truth);
        let noise = noise_label(&truth);
        let sigma = fmt_num(truth.total_sigma());
        *coverage.entry((kind.clone(), size.clone(), noise.clone(), sigma.clone())).or_default() += 1;
        let side_path = Sidecar::path(output, &name);
        let sidecar = Sidecar {
            image: name.clone(),
            seed: s,
            truth,
            run_config: cfg.to_value(),
        };
        let mut text = serde_json::to_string_pretty(&sidecar).map_err(data)?;
        text.push('\n');
        write_text(&side_path, &text)?;
        images.push(json!({
            "input": path,
            "output": out_path,
            "sidecar": side_path,
            "seed": s,
            "blur": kind,
            "size": size,
            "noise": noise,
            "sigma_dn": sigma,
        }));
        outputs.push(out_path);
        outputs.push(side_path);
    }
    let coverage: Vec<Value> = coverage
        .into_iter()
        .map(|((blur, size, noise, sigma), count)| {
            json!({"blur": blur, "size": size, "noise": noise, "sigma_dn": sigma, "count": count})
        })
        .collect();
    let manifest = output.join("manifest.json");
    write_text(
        &manifest,
        &json_with_config(cfg, json!({"count": images.len(), "coverage": coverage, "images": images})),
    )?;
    outputs.push(manifest);
    Ok(Summary::new(
        cfg,
        outputs,
        json!({"images": files.len(), "coverage": coverage}),
        format!("corrupted {} images into {}", files.len(), output.display()),
    ))
}

// ---------------------------------------------------------------- estimate

fn optional_sidecar(dir: &Path, name: &str) -> CliResult<Option<GroundTruthBundle>> {
    let p = Sidecar::path(dir, name);
    if p.is_file() {
        Ok(Some(Sidecar::load(&p)?.truth))
    } else {
        Ok(None)
    }
}

pub fn estimate(cfg: &RunConfig) -> CliResult<Summary> {
    let input = cfg.require_input()?;
    let output = cfg.require_output()?;
    let (noise_ids, blur_ids) = estimator_sets(cfg, "pca", "mtf-spectral");
    let files = if input.is_dir() { list_images(input)? } else { vec![input.to_path_buf()] };
    let registry = Registry::builtin();

    let mut lines = vec![json!({"run_config": cfg.to_value()}).to_string()];
    let (mut n_noise, mut n_blur, mut skipped) = (0usize, 0usize, 0usize);
    for path in &files {
        let name = file_name(path);
        let dir = path.parent().unwrap_or(Path::new("."));
        let img = load_gray(path)?;
        let truth = optional_sidecar(dir, &name)?;
        for id in &noise_ids {
            let est = registry.noise(id).map_err(config)?;
            for p in tile_patches(&img, NOISE_PATCH, NOISE_PATCH)? {
                let e = est.estimate(&p)?;
                lines.push(json!({"image": name, "kind": "noise", "estimate": e}).to_string());
                n_noise += 1;
            }
        }
        for id in &blur_ids {
            let est = registry.blur(id).map_err(config)?;
            if id == "mtf-oracle" && truth.is_none() {
                return Err(data(format!("mtf-oracle needs a .gt.json sidecar next to {name}")));
            }
            let patches = tile_patches(&img, BLUR_PATCH, BLUR_PATCH)?;
            for (b, chunk) in patches.chunks(MAX_BATCH).enumerate() {
                match est.estimate(BlurInput {
                    patches: chunk,
                    truth: truth.as_ref(),
                }) {
                    Ok(mut e) => {
                        e.batch = Some(b);
                        lines.push(json!({"image": name, "kind": "blur", "estimate": e}).to_string());
                        n_blur += 1;
                    }
                    Err(err @ (Error::InsufficientTexture | Error::NoGroundTruth)) => {
                        let origin = chunk[0].origin();
                        lines.push(
                            json!({"image": name, "kind": "blur", "method": id, "batch": b, "origin": origin, "skipped": err.to_string()})
                                .to_string(),
                        );
                        skipped += 1;
                    }
                    Err(err) => return Err(err.into()),
                }
            }
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    write_text(output, &text)?;
    Ok(Summary::new(
        cfg,
        vec![output.to_path_buf()],
        json!({"images": files.len(), "noise_estimates": n_noise, "blur_estimates": n_blur, "skipped_batches": skipped}),
        format!("{n_noise} noise and {n_blur} blur estimates from {} images", files.len()),
    ))
}

// ---------------------------------------------------------------- evaluate

pub fn evaluate(cfg: &RunConfig) -> CliResult<Summary> {
    let input = cfg.require_input()?;
    let output = cfg.require_output()?;
    let (noise_ids, blur_ids) = estimator_sets(cfg, "pca", "mtf-oracle");
    let files = list_images(input)?;
    let registry = Registry::builtin();

    // (estimator/kind, first extent, size label) -> per-batch AMAE
    let mut blur_cells: BTreeMap<(String, String), (f64, Vec<f64>)> = BTreeMap::new();
    // (estimator, noise label, sigma in 0.1 DN) -> sigma estimates
    let mut noise_cells: BTreeMap<(String, String, i64), Vec<f64>> = BTreeMap::new();
    let mut skipped = 0usize;
    for path in &files {
        let name = file_name(path);
        let side = Sidecar::path(input, &name);
        if !side.is_file() {
            return Err(data(format!("missing sidecar {}", side.display())));
        }
        let truth = Sidecar::load(&side)?.truth;
        let img = load_gray(path)?;
        for id in &noise_ids {
            let est = registry.noise(id).map_err(config)?;
            let key = (id.clone(), noise_label(&truth), (truth.total_sigma() * 10.0).round() as i64);
            let values = noise_cells.entry(key).or_default();
            for p in tile_patches(&img, NOISE_PATCH, NOISE_PATCH)? {
                values.push(est.estimate(&p)?.sigma_hat);
            }
        }
        if truth.kernels.is_empty() {
            continue;
        }
        let gt = truth.combined_mtf();
        let (kind, size, extent) = blur_label(&truth);
        for id in &blur_ids {
            let est = registry.blur(id).map_err(config)?;
            let patches = tile_patches(&img, BLUR_PATCH, BLUR_PATCH)?;
            let cell = blur_cells.entry((format!("{id}/{kind}"), size.clone())).or_insert((extent, Vec::new()));
            for chunk in patches.chunks(MAX_BATCH) {
                match est.estimate(BlurInput {
                    patches: chunk,
                    truth: Some(&truth),
                }) {
                    Ok(e) => cell.1.push(amae(&e.mtf, &gt)?.amae),
                    Err(Error::InsufficientTexture) => skipped += 1,
                    Err(err) => return Err(err.into()),
                }
            }
        }
    }
    ensure_dir(output)?;
    let mut outputs = Vec::new();

    let mut amae_cells: Vec<(f64, AmaeCell)> = Vec::new();
    for ((row, column), (extent, values)) in blur_cells {
        if values.is_empty() {
            continue;
        }
        amae_cells.push((
            extent,
            AmaeCell {
                row,
                column,
                amae: median(&values)?,
            },
        ));
    }
    amae_cells.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.row.cmp(&b.1.row)));
    let amae_cells: Vec<AmaeCell> = amae_cells.into_iter().map(|(_, c)| c).collect();
    if !blur_ids.is_empty() {
        let p = output.join("amae.csv");
        write_text(&p, &csv_with_config(cfg, &amae_table_csv(&amae_cells)))?;
        outputs.push(p);
    }

    let mut noise_rows = Vec::new();
    for ((estimator, noise, sigma10), values) in noise_cells {
        if values.is_empty() {
            continue;
        }
        let s = robust_stats(&values)?;
        noise_rows.push(NoiseEnvelopeRow {
            estimator,
            noise,
            sigma: sigma10 as f64 / 10.0,
            min: s.min,
            median: s.median,
            max: s.max,
            n: s.n_samples,
        });
    }
    if !noise_ids.is_empty() {
        let p = output.join("noise.csv");
        write_text(&p, &csv_with_config(cfg, &fig8_csv(&noise_rows)))?;
        outputs.push(p);
    }
    Ok(Summary::new(
        cfg,
        outputs,
        json!({"images": files.len(), "amae": amae_cells, "noise": noise_rows, "skipped_batches": skipped}),
        format!(
            "evaluated {} images: {} AMAE cells, {} noise rows",
            files.len(),
            amae_cells.len(),
            noise_rows.len()
        ),
    ))
}

// ---------------------------------------------------------------- build-iopc

fn annotated_frames(dir: &Path, truth: &Path) -> CliResult<Vec<Frame>> {
    let text = std::fs::read_to_string(truth).map_err(|e| data(format!("{}: {e}", truth.display())))?;
    let records = parse_jsonl(&text)?;
    list_images(dir)?
        .iter()
        .map(|p| {
            let id = file_name(p);
            let boxes = records.iter().filter(|r| r.image == id).map(|r| r.to_box()).collect();
            Ok(Frame {
                image: load_gray(p)?,
                id,
                boxes,
            })
        })
        .collect()
}

pub fn build(cfg: &RunConfig) -> CliResult<Summary> {
    let root = cfg.require_seed()?;
    let output = cfg.require_output()?;
    let frames = match (&cfg.input, &cfg.truth) {
        (Some(dir), Some(truth)) => annotated_frames(dir, truth)?,
        (Some(_), None) => return Err(config("--input frames need --truth boxes")),
        (None, _) => scene_frames(cfg.scenes.unwrap_or(8), seed::derive(root, HEAT_FRAMES))?,
    };
    let build = BuildConfig {
        noise_estimator: single(&cfg.noise, "pca", "noise")?,
        blur_estimator: single(&cfg.blur, "mtf-oracle", "blur")?,
        frequency: cfg.frequency.unwrap_or(CONTROL_FREQUENCY),
        reading: cfg.reading.unwrap_or(MtfReading::Worst),
        seed: seed::derive(root, HEAT_BUILD),
        ..BuildConfig::default()
    };
    if !(build.frequency > 0.0 && build.frequency <= 0.5) {
        return Err(config("--frequency must lie in (0, 0.5]"));
    }
    let detector = SyntheticDetector::new(seed::derive(root, HEAT_DETECTOR));
    let (iopc, points) = build_iopc(&frames, &build, &Registry::builtin(), &detector)?;
    ensure_dir(output)?;
    let json_path = output.join("iopc.json");
    let iopc_value = serde_json::to_value(&iopc).map_err(data)?;
    write_text(&json_path, &json_with_config(cfg, iopc_value))?;
    let csv_path = output.join("iopc.csv");
    write_text(&csv_path, &csv_with_config(cfg, &iopc.to_csv_matrix()))?;
    let points_path = output.join("points.csv");
    write_text(&points_path, &csv_with_config(cfg, &grid_points_csv(&points)))?;
    Ok(Summary::new(
        cfg,
        vec![json_path, csv_path, points_path],
        json!({"frames": frames.len(), "grid_points": points.len(), "populated_cells": iopc.populated()}),
        format!(
            "performance curve from {} frames: {} of {} cells populated",
            frames.len(),
            iopc.populated(),
            iopc.cells.len()
        ),
    ))
}

// ---------------------------------------------------------------- control

fn measure(cfg: &RunConfig, iopc: &Iopc) -> CliResult<(f64, f64)> {
    if let (Some(s), Some(m)) = (cfg.sigma_hat, cfg.mtf_hat) {
        return Ok((s, m));
    }
    let Some(path) = cfg.input.as_deref() else {
        return Err(config("give --sigma-hat and --mtf-hat, or an --input image"));
    };
    let registry = Registry::builtin();
    let noise = registry.noise(&single(&cfg.noise, "pca", "noise")?).map_err(config)?;
    let blur = registry.blur(&single(&cfg.blur, "mtf-spectral", "blur")?).map_err(config)?;
    let img = load_gray(path)?;
    let truth = optional_sidecar(path.parent().unwrap_or(Path::new(".")), &file_name(path))?;
    let (s, m) = patch_estimates(&img, truth.as_ref(), &[], &*noise, &*blur, iopc.frequency, iopc.reading)?;
    Ok((median(&s)?, median(&m)?))
}

pub fn control(cfg: &RunConfig) -> CliResult<Summary> {
    let iopc_path = cfg.iopc.as_deref().ok_or_else(|| config("missing --iopc"))?;
    let camera = CameraConstants::load(cfg.camera.as_deref())?;
    let exposure = cfg.exposure_s.ok_or_else(|| config("missing --exposure-s"))?;
    let iso = cfg.iso.ok_or_else(|| config("missing --iso"))?;
    let state = CameraState::new(exposure, iso).map_err(config)?;
    if !camera.bounds.contains(&state) {
        return Err(config("camera state lies outside the camera bounds"));
    }
    let iopc = Iopc::load(iopc_path)?;
    let table = match &camera.calibration {
        Some(t) => t.clone(),
        None => CalibrationTable::linear_motion(&CALIBRATION_EXTENTS, 0.0, iopc.frequency, iopc.reading)
            .map_err(|e| config(format!("default calibration at the curve's frequency: {e}")))?,
    };
    let (sigma_hat, mtf_hat) = measure(cfg, &iopc)?;
    let model = TradeoffModel {
        extent_uncertainty: camera.extent_uncertainty,
    };
    let action = decide_with(&iopc, sigma_hat, mtf_hat, &table, &model, state, &camera.bounds)?;
    let body = json!({
        "camera": camera,
        "state": state,
        "measurement": {"sigma_hat": sigma_hat, "mtf_hat": mtf_hat},
        "action": action,
    });
    let mut outputs = Vec::new();
    if let Some(out) = &cfg.output {
        write_text(out, &json_with_config(cfg, body.clone()))?;
        outputs.push(out.clone());
    }
    let message = format!(
        "{:?} by {:.3}: exposure {:.4} s, iso {:.3}, predicted AP {:.3} -> {:.3}",
        action.direction,
        action.alpha,
        action.new_exposure_s,
        action.new_iso,
        action.predicted_ap_before,
        action.predicted_ap_after
    );
    Ok(Summary::new(cfg, outputs, body, message))
}

// ---------------------------------------------------------------- reproduce

pub fn reproduce(cfg: &RunConfig) -> CliResult<Summary> {
    let figure = cfg.figure.as_deref().ok_or_else(|| config("missing figure id"))?;
    if !RECIPES.contains(&figure) {
        return Err(config(format!("unknown figure `{figure}` (expected one of {})", RECIPES.join(", "))));
    }
    let root = cfg.require_seed()?;
    let output = cfg.require_output()?;
    let defaults = ReproduceConfig::new(root);
    let rc = ReproduceConfig {
        seed: root,
        scenes: cfg.scenes.unwrap_or(defaults.scenes),
        patches: cfg.patches.unwrap_or(defaults.patches),
    };
    if rc.scenes == 0 || rc.patches == 0 {
        return Err(config("--scenes and --patches must be positive"));
    }
    let artifacts = run_recipe(figure, &rc)?;
    ensure_dir(output)?;
    let mut outputs = Vec::new();
    for a in &artifacts {
        let path = output.join(&a.name);
        let text = if a.name.ends_with(".json") {
            json_with_config(cfg, serde_json::from_str(&a.body).map_err(data)?)
        } else {
            csv_with_config(cfg, &a.body)
        };
        write_text(&path, &text)?;
        outputs.push(path);
    }
    Ok(Summary::new(
        cfg,
        outputs,
        json!({"figure": figure, "artifacts": artifacts.iter().map(|a| &a.name).collect::<Vec<_>>()}),
        format!("{figure}: wrote {} artifacts to {}", artifacts.len(), output.display()),
    ))
}
