//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use camcond::blur::{defocus_kernel, linear_motion_kernel, Kernel, KernelKind, KernelMeta, SIZE_GRID};
use camcond::control::{
    alpha_for_target, apply_action, mtf_to_blur_extent, ActionDirection, CalibrationTable, CameraBounds, CameraState,
};
use camcond::division::{divide_mtf, DivisionGuard};
use camcond::estimate::{BlurEstimator, BlurInput, NoiseEstimator, OracleEstimator, Registry};
use camcond::experiments::{closed_loop, control_iopc, ReproduceConfig};
use camcond::iopc::{average_precision, DetBox};
use camcond::metrics::robust_stats;
use camcond::noise::{photon_shot, NoiseSource};
use camcond::pipeline::{corrupt_pipeline, BlurSpec, Recipe};
use camcond::scene::{patch_kind_cycle, synthetic_patch};
use camcond::{kernel_mtf, seed, GrayImage, FREQUENCIES};
use rand::Rng;

type Outcome = Result<(bool, String), String>;

const ROUND_TRIP_TOL: f64 = 1e-6;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const BOX_TOL: f64 = 1e-4;
const NOISE_PATCHES: usize = 200;
const NOISE_SIGMAS: [f64; 5] = [5.0, 10.0, 15.0, 20.0, 25.0];
const PCA_TOL: f64 = 1.5;
const BF_TOL: f64 = 2.5;
const PCA_CLEAN_MAX: f64 = 1.5;
const NOISE_BUDGET: Duration = Duration::from_secs(60);
const PHOTON_MOTION_MAX: f64 = 2.0;
const DEFOCUS_DCSN_TOL: f64 = 1.5;
const POISSON_MEAN_REL: f64 = 0.01;
const POISSON_VAR_REL: f64 = 0.03;
const AP_INSTANCES: usize = 500;
const AP_WORKED: f64 = 0.833;
const AP_WORKED_TOL: f64 = 1e-9;
const INTENSITY_TOL: f64 = 1e-12;
const LOOP_SCENES: usize = 20;
const LOOP_TOL: f64 = 0.05;
const NOISE_MS_MAX: f64 = 10.0;
const ORACLE_MS_MAX: f64 = 1.0;
const ROOT: u64 = 20_240_601;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// 1 ----------------------------------------------------------------------

fn round_trip() -> Outcome {
    let start = Instant::now();
    let (mut worst_product, mut worst_division, mut pairs) = (0.0f64, 0.0f64, 0);
    for &d1 in &SIZE_GRID {
        for &d2 in &SIZE_GRID {
            let b1 = defocus_kernel(d1).map_err(err)?;
            let b2 = linear_motion_kernel(d2 as f64, 0.0).map_err(err)?;
            let (m1, m2) = (kernel_mtf(&b1), kernel_mtf(&b2));
            let combined = kernel_mtf(&b1.compose(&b2));
            let product = m1.product(&m2).map_err(err)?;
            worst_product = worst_product
                .max(max_abs(&combined.h, &product.h))
                .max(max_abs(&combined.v, &product.v));
            let div = divide_mtf(&combined, &m2, DivisionGuard::default()).map_err(err)?;
            for i in 0..8 {
                if let Some(r) = div.recovered_h[i] {
                    worst_division = worst_division.max((r - m1.h[i]).abs());
                }
                if let Some(r) = div.recovered_v[i] {
                    worst_division = worst_division.max((r - m1.v[i]).abs());
                }
            }
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = pairs == 25 && worst_product <= ROUND_TRIP_TOL && worst_division <= ROUND_TRIP_TOL && elapsed < ROUND_TRIP_BUDGET;
    Ok((
        ok,
        format!(
            "{pairs} pairs, product err {worst_product:.2e}, division err {worst_division:.2e} (tol {ROUND_TRIP_TOL:e}), {:.2} s (< {} s)",
            elapsed.as_secs_f64(),
            ROUND_TRIP_BUDGET.as_secs()
        ),
    ))
}

// 2 ----------------------------------------------------------------------

/// |sin(pi f d) / (d sin(pi f))|, the DTFT magnitude of a length-d box.
fn periodic_sinc(f: f64, d: usize) -> f64 {
    let d = d as f64;
    ((std::f64::consts::PI * f * d).sin() / (d * (std::f64::consts::PI * f).sin())).abs()
}

fn box_kernel(d: usize) -> Result<Kernel, String> {
    let mut w = vec![0.0; d * d];
    for x in 0..d {
        w[(d / 2) * d + x] = 1.0 / d as f64;
    }
    Kernel::from_weights(d, w, KernelMeta::of_kind(KernelKind::Custom, d as f64)).map_err(err)
}

fn box_mtf() -> Outcome {
    let mut worst = 0.0f64;
    for &d in &SIZE_GRID {
        let m = kernel_mtf(&box_kernel(d)?);
        for (i, &f) in FREQUENCIES.iter().enumerate() {
            worst = worst.max((m.h[i] - periodic_sinc(f, d)).abs()).max((m.v[i] - 1.0).abs());
        }
    }
    Ok((worst <= BOX_TOL, format!("max |MTF - periodic sinc| {worst:.2e} over d in {SIZE_GRID:?} (tol {BOX_TOL:e})")))
}

// 3 and 4 ----------------------------------------------------------------

fn clean_patches() -> Result<Vec<GrayImage>, String> {
    (0..NOISE_PATCHES)
        .map(|i| synthetic_patch(128, patch_kind_cycle(i), seed::derive_path(ROOT, &[3, i as u64])).map_err(err))
        .collect()
}

/// Trimmed median of σ̂ over the patches corrupted by `recipe`.
fn trimmed_median(est: &dyn NoiseEstimator, clean: &[GrayImage], recipe: Option<&Recipe>, tag: u64) -> Result<f64, String> {
    let mut values = Vec::with_capacity(clean.len());
    for (i, c) in clean.iter().enumerate() {
        let img = match recipe {
            Some(r) => corrupt_pipeline(c, r, seed::derive_path(ROOT, &[4, tag, i as u64])).map_err(err)?.0,
            None => c.clone(),
        };
        values.push(est.estimate(&img.as_patch().map_err(err)?).map_err(err)?.sigma_hat);
    }
    Ok(robust_stats(&values).map_err(err)?.median)
}

fn noise_accuracy(clean: &[GrayImage]) -> Outcome {
    let start = Instant::now();
    let registry = Registry::builtin();
    let (pca, bf) = (registry.noise("pca").map_err(err)?, registry.noise("bf").map_err(err)?);
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, &sigma) in NOISE_SIGMAS.iter().enumerate() {
        let recipe = Recipe::noise_only(&[NoiseSource::Readout], sigma);
        let p = trimmed_median(&*pca, clean, Some(&recipe), k as u64)?;
        let b = trimmed_median(&*bf, clean, Some(&recipe), k as u64)?;
        ok &= (p - sigma).abs() <= PCA_TOL && (b - sigma).abs() <= BF_TOL;
        parts.push(format!("s{sigma}: pca {p:.2} bf {b:.2}"));
    }
    let clean_pca = trimmed_median(&*pca, clean, None, 99)?;
    ok &= clean_pca <= PCA_CLEAN_MAX;
    let elapsed = start.elapsed();
    ok &= elapsed < NOISE_BUDGET;
    Ok((
        ok,
        format!(
            "{}; s0 pca {clean_pca:.2} (<= {PCA_CLEAN_MAX}); tol pca {PCA_TOL} bf {BF_TOL}; {:.1} s (< {} s)",
            parts.join(", "),
            elapsed.as_secs_f64(),
            NOISE_BUDGET.as_secs()
        ),
    ))
}

fn order_effect(clean: &[GrayImage]) -> Outcome {
    let pca = Registry::builtin().noise("pca").map_err(err)?;
    let photon_motion = Recipe::photon_then_blur(10.0, BlurSpec::LinearMotion { length: 3.0, angle_deg: 0.0 });
    let defocus_dcsn = Recipe::blur_then_noise(BlurSpec::Defocus { diameter: 7 }, &[NoiseSource::Dcsn], 10.0);
    let a = trimmed_median(&*pca, clean, Some(&photon_motion), 40)?;
    let b = trimmed_median(&*pca, clean, Some(&defocus_dcsn), 41)?;
    let ok = a <= PHOTON_MOTION_MAX && (b - 10.0).abs() <= DEFOCUS_DCSN_TOL;
    Ok((
        ok,
        format!("photon 10 then motion 3: {a:.2} (<= {PHOTON_MOTION_MAX}); defocus 7 then dcsn 10: {b:.2} (|err| <= {DEFOCUS_DCSN_TOL})"),
    ))
}

// 5 ----------------------------------------------------------------------

fn poisson() -> Outcome {
    let img = GrayImage::constant(1000, 1000, 100.0).map_err(err)?;
    let (noisy, _) = photon_shot(&img, seed::derive(ROOT, 5)).map_err(err)?;
    let v = noisy.data();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ok = (mean - 100.0).abs() <= POISSON_MEAN_REL * 100.0 && (var - 100.0).abs() <= POISSON_VAR_REL * 100.0;
    Ok((
        ok,
        format!("mean {mean:.3} (within {}%), variance {var:.3} (within {}%)", POISSON_MEAN_REL * 100.0, POISSON_VAR_REL * 100.0),
    ))
}

// 6 ----------------------------------------------------------------------

/// Largest number of detections among `dets` that can be matched one-to-one
/// to boxes with IoU at least `thr`, by trying every assignment.
fn max_matching(dets: &[&DetBox], gts: &[DetBox], thr: f64, used: &mut Vec<bool>) -> usize {
    let Some((first, rest)) = dets.split_first() else {
        return 0;
    };
    let mut best = max_matching(rest, gts, thr, used);
    for g in 0..gts.len() {
        if !used[g] && first.iou(&gts[g]) >= thr {
            used[g] = true;
            best = best.max(1 + max_matching(rest, gts, thr, used));
            used[g] = false;
        }
    }
    best
}

/// AP with the true-positive count at each rank set to the best any
/// assignment of the top-ranked detections achieves.
fn exhaustive_ap(dets: &[DetBox], gts: &[DetBox], thr: f64) -> f64 {
    if gts.is_empty() {
        return if dets.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ranked: Vec<&DetBox> = dets.iter().collect();
    ranked.sort_by(|a, b| b.confidence.unwrap_or(0.0).total_cmp(&a.confidence.unwrap_or(0.0)));
    let counts: Vec<usize> = (0..=ranked.len())
        .map(|k| max_matching(&ranked[..k], gts, thr, &mut vec![false; gts.len()]))
        .collect();
    let precision: Vec<f64> = (1..=ranked.len()).map(|k| counts[k] as f64 / k as f64).collect();
    let mut area = 0.0;
    let mut best_after = 0.0f64;
    for k in (1..=ranked.len()).rev() {
        best_after = best_after.max(precision[k - 1]);
        if counts[k] > counts[k - 1] {
            area += best_after;
        }
    }
    area / gts.len() as f64
}

fn ap_oracle() -> Outcome {
    let mut rng = seed::rng(seed::derive(ROOT, 6));
    let mut mismatches = 0;
    for _ in 0..AP_INSTANCES {
        let n_gt = rng.random_range(0..=4);
        let n_det = rng.random_range(0..=4);
        let mut boxes = |n: usize, conf: bool| -> Vec<DetBox> {
            (0..n)
                .map(|_| {
                    let (x, y) = (rng.random_range(0.0..12.0), rng.random_range(0.0..12.0));
                    let (w, h) = (rng.random_range(6.0..12.0), rng.random_range(6.0..12.0));
                    if conf {
                        DetBox::detection("car", x, y, w, h, rng.random_range(0.0..1.0))
                    } else {
                        DetBox::truth("car", x, y, w, h)
                    }
                })
                .collect()
        };
        let gts = boxes(n_gt, false);
        let dets = boxes(n_det, true);
        if average_precision(&dets, &gts, 0.5) != exhaustive_ap(&dets, &gts, 0.5) {
            mismatches += 1;
        }
    }
    let b = |x: f64| DetBox::truth("car", x, 0.0, 10.0, 10.0);
    let d = |x: f64, y: f64, c: f64| DetBox::detection("car", x, y, 10.0, 10.0, c);
    let worked = average_precision(&[d(0.0, 0.0, 0.9), d(60.0, 60.0, 0.8), d(30.0, 0.0, 0.7)], &[b(0.0), b(30.0)], 0.5);
    let ok = mismatches == 0 && (worked - AP_WORKED).abs() <= 0.0005 && (worked - 5.0 / 6.0).abs() <= AP_WORKED_TOL;
    Ok((
        ok,
        format!("{mismatches} mismatches in {AP_INSTANCES} instances; worked example {worked:.9} (0.833, exact 5/6 within {AP_WORKED_TOL:e})"),
    ))
}

// 7 ----------------------------------------------------------------------

fn control_example() -> Outcome {
    let table = CalibrationTable::dense_motion().map_err(err)?;
    let d_hat = mtf_to_blur_extent(table.extent_to_mtf(18.0), &table);
    let alpha = alpha_for_target(d_hat, 9.0).map_err(err)?;
    let g = 1.6;
    let start = CameraState::new(0.028, g).map_err(err)?;
    let applied = apply_action(start, alpha, ActionDirection::BlurReduce, &CameraBounds::default()).map_err(err)?;
    let s = applied.state;
    let drift = (s.intensity() - start.intensity()).abs();
    let iopc = control_iopc(&ReproduceConfig::new(ROOT)).map_err(err)?;
    let before = iopc.lookup(5.0, table.extent_to_mtf(18.0));
    let after = iopc.lookup(5.0 * alpha, table.extent_to_mtf(18.0 / alpha));
    let ok = d_hat == 18.0 && alpha == 2.0 && s.exposure_s == 0.014 && s.iso == 2.0 * g && !applied.clipped && drift <= INTENSITY_TOL;
    Ok((
        ok,
        format!(
            "d_hat {d_hat}, alpha {alpha}, (28 ms, iso {g}) -> ({} ms, iso {}), intensity drift {drift:.1e} (tol {INTENSITY_TOL:e}); curve AP at sigma 5: {:.3} -> {:.3}",
            s.exposure_s * 1e3,
            s.iso,
            before.map_err(err)?,
            after.map_err(err)?
        ),
    ))
}

// 8 ----------------------------------------------------------------------

fn closed_loop_check() -> Outcome {
    let iopc = control_iopc(&ReproduceConfig::new(ROOT)).map_err(err)?;
    let outcomes = closed_loop(&iopc, LOOP_SCENES, ROOT).map_err(err)?;
    let mut worst = f64::INFINITY;
    let mut failed = 0;
    for o in &outcomes {
        match o.ap_after {
            Some(after) => {
                let diff = after - o.ap_before;
                worst = worst.min(diff);
                failed += usize::from(diff < -LOOP_TOL);
            }
            None => failed += 1,
        }
    }
    let moved = outcomes.iter().filter(|o| o.action.alpha != 1.0).count();
    Ok((
        outcomes.len() == LOOP_SCENES && failed == 0,
        format!(
            "{} scenes, {moved} acted, {failed} below tolerance; worst AP change {worst:+.4} (tol -{LOOP_TOL})",
            outcomes.len()
        ),
    ))
}

// 9 ----------------------------------------------------------------------

fn performance(clean: &[GrayImage]) -> Outcome {
    let registry = Registry::builtin();
    let patches: Vec<GrayImage> = clean
        .iter()
        .take(50)
        .enumerate()
        .map(|(i, c)| {
            corrupt_pipeline(c, &Recipe::noise_only(&[NoiseSource::Readout], 10.0), seed::derive_path(ROOT, &[9, i as u64]))
                .map(|r| r.0)
                .map_err(err)
        })
        .collect::<Result<_, _>>()?;
    let mut per_patch = Vec::new();
    for id in ["pca", "bf"] {
        let est = registry.noise(id).map_err(err)?;
        let start = Instant::now();
        for p in &patches {
            est.estimate(&p.as_patch().map_err(err)?).map_err(err)?;
        }
        per_patch.push((id, start.elapsed().as_secs_f64() * 1e3 / patches.len() as f64));
    }
    let img = GrayImage::constant(192, 192, 100.0).map_err(err)?;
    let (_, truth) = corrupt_pipeline(
        &img,
        &Recipe::blur_only(BlurSpec::LinearMotion { length: 11.0, angle_deg: 30.0 }),
        1,
    )
    .map_err(err)?;
    let patch = [img.as_patch().map_err(err)?];
    let calls = 1000;
    let start = Instant::now();
    for _ in 0..calls {
        OracleEstimator
            .estimate(BlurInput {
                patches: &patch,
                truth: Some(&truth),
            })
            .map_err(err)?;
    }
    let oracle_ms = start.elapsed().as_secs_f64() * 1e3 / calls as f64;
    let ok = per_patch.iter().all(|&(_, ms)| ms <= NOISE_MS_MAX) && oracle_ms <= ORACLE_MS_MAX;
    Ok((
        ok,
        format!(
            "pca {:.2} ms, bf {:.2} ms per 128x128 patch (<= {NOISE_MS_MAX}); oracle {oracle_ms:.4} ms (<= {ORACLE_MS_MAX})",
            per_patch[0].1, per_patch[1].1
        ),
    ))
}

// 10 ---------------------------------------------------------------------

fn reproduce_table2(out: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_camcond"))
        .args(["reproduce", "table2", "--seed", "7", "--output"])
        .arg(out)
        .output()
        .map_err(err)?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    std::fs::read(out.join("table2.csv")).map_err(err)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let first = reproduce_table2(dir.path())?;
    let second = reproduce_table2(dir.path())?;
    let rows = String::from_utf8_lossy(&first).lines().filter(|l| !l.starts_with('#')).count() - 1;
    Ok((
        !first.is_empty() && first == second,
        format!("two runs, {} bytes, {rows} rows, identical: {}", first.len(), first == second),
    ))
}

fn main() {
    let clean = clean_patches();
    let with_clean = |f: fn(&[GrayImage]) -> Outcome| -> Outcome {
        match &clean {
            Ok(c) => f(c),
            Err(e) => Err(e.clone()),
        }
    };
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "convolution-theorem round trip", round_trip()),
        (2, "box-kernel analytic MTF", box_mtf()),
        (3, "noise-estimator accuracy", with_clean(noise_accuracy)),
        (4, "order effect", with_clean(order_effect)),
        (5, "Poisson statistics", poisson()),
        (6, "AP oracle equivalence", ap_oracle()),
        (7, "control worked example", control_example()),
        (8, "closed-loop improvement", closed_loop_check()),
        (9, "performance envelope", with_clean(performance)),
        (10, "determinism", determinism()),
    ];
    let mut failures = 0;
    for (n, name, outcome) in results {
        match outcome {
            Ok((true, detail)) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Ok((false, detail)) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
            Err(e) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: error: {e}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
