use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use camcond::blur::defocus_kernel;
use camcond::experiments::{control_iopc, ReproduceConfig};
use camcond::image::save_gray;
use camcond::iopc::Iopc;
use camcond::noise::NoisePosition;
use camcond::scene::power_law_texture;
use camcond::kernel_mtf;
use camcond_cli::commands::Sidecar;
use serde_json::Value;

fn camcond(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camcond")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn inputs(dir: &Path, n: usize) -> PathBuf {
    let d = dir.join("in");
    std::fs::create_dir_all(&d).unwrap();
    for i in 0..n {
        let img = power_law_texture(256, 256, 1.2, 128.0, 20.0, 100 + i as u64).unwrap();
        save_gray(&img, d.join(format!("img{i:02}.png"))).unwrap();
    }
    d
}

fn sidecars(dir: &Path) -> Vec<Sidecar> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".gt.json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Sidecar::load(p).unwrap()).collect()
}

const DEFOCUS7: &str = r#"{"stages":[{"kind":"blur","blur":{"type":"defocus","diameter":7}}]}"#;

#[test]
fn corrupt_defocus_sidecars() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 10);
    let out = tmp.path().join("out");
    let r = camcond(&["corrupt", "--input", p(&input), "--output", p(&out), "--recipe", DEFOCUS7, "--seed", "5"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let cars = sidecars(&out);
    assert_eq!(cars.len(), 10);
    let want = kernel_mtf(&defocus_kernel(7).unwrap());
    for s in &cars {
        assert_eq!(s.truth.combined_mtf(), want);
        assert!(out.join(&s.image).is_file());
        assert_eq!(s.run_config["seed"], 5);
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["count"], 10);
    assert_eq!(manifest["coverage"][0]["blur"], "defocus");
    assert_eq!(manifest["run_config"]["subcommand"], "corrupt");
}

#[test]
fn corrupt_photon_then_motion_records_pre_blur() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 2);
    let out = tmp.path().join("out");
    let recipe = r#"{"stages":[{"kind":"noise","sources":["photon"],"sigma":10},{"kind":"blur","blur":{"type":"linear_motion","length":3}}]}"#;
    let r = camcond(&["corrupt", "--input", p(&input), "--output", p(&out), "--recipe", recipe, "--seed", "1"]);
    assert!(r.status.success());
    for s in sidecars(&out) {
        assert_eq!(s.truth.noise[0].position, NoisePosition::PreBlur);
    }
}

#[test]
fn corrupt_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 3);
    let out = tmp.path().join("out");
    let recipe = r#"{"stages":[{"kind":"blur","blur":{"type":"nonlinear_motion","length":9}},{"kind":"noise","sources":["dcsn","readout"],"sigma":8}]}"#;
    let args = ["corrupt", "--input", p(&input), "--output", p(&out), "--recipe", recipe, "--seed", "9"];
    assert!(camcond(&args).status.success());
    let read = |name: &str| std::fs::read(out.join(name)).unwrap();
    let names = ["img00.png", "img01.gt.json", "img02.png", "manifest.json"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| read(n)).collect();
    assert!(camcond(&args).status.success());
    let second: Vec<Vec<u8>> = names.iter().map(|n| read(n)).collect();
    assert_eq!(first, second);
}

#[test]
fn evaluate_oracle_and_both_noise_estimators() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 4);
    let blurred = tmp.path().join("blurred");
    let recipe = r#"{"stages":[{"kind":"blur","blur":{"type":"linear_motion","length":7,"angle_deg":30}},{"kind":"noise","sources":["readout"],"sigma":5}]}"#;
    assert!(camcond(&["corrupt", "--input", p(&input), "--output", p(&blurred), "--recipe", recipe, "--seed", "2"]).status.success());
    let ev = tmp.path().join("ev");
    let r = camcond(&["--json", "evaluate", "--input", p(&blurred), "--output", p(&ev), "--noise", "bf,pca", "--blur", "mtf-oracle"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(summary["status"], "ok");
    let amae = std::fs::read_to_string(ev.join("amae.csv")).unwrap();
    assert!(amae.starts_with("# run_config="));
    assert!(amae.contains("mtf-oracle/linear_motion,0.00"), "{amae}");
    let noise = std::fs::read_to_string(ev.join("noise.csv")).unwrap();
    assert!(noise.lines().any(|l| l.starts_with("bf,readout,5,")));
    assert!(noise.lines().any(|l| l.starts_with("pca,readout,5,")));
}

#[test]
fn evaluate_pca_combined_noise_row() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 6);
    let noisy = tmp.path().join("noisy");
    let recipe = r#"{"stages":[{"kind":"noise","sources":["photon","dcsn","readout"],"sigma":15,"preset":{"type":"combined"}}]}"#;
    assert!(camcond(&["corrupt", "--input", p(&input), "--output", p(&noisy), "--recipe", recipe, "--seed", "3"]).status.success());
    let ev = tmp.path().join("ev");
    assert!(camcond(&["evaluate", "--input", p(&noisy), "--output", p(&ev), "--noise", "pca"]).status.success());
    let text = std::fs::read_to_string(ev.join("noise.csv")).unwrap();
    let row: Vec<&str> = text.lines().find(|l| l.starts_with("pca,")).unwrap().split(',').collect();
    assert_eq!(&row[1..3], ["photon+dcsn+readout", "15"]);
    let (min, med, max): (f64, f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap(), row[5].parse().unwrap());
    assert!(min <= med && med <= max);
    assert!((med - 15.0).abs() < 1.5, "{med}");
    assert_eq!(row[6], "24");
    assert!(!ev.join("amae.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 1);
    let out = tmp.path().join("out");
    // unknown estimator: rejected by the parser
    assert_eq!(camcond(&["estimate", "--input", p(&input), "--output", "x", "--noise", "nope"]).status.code(), Some(2));
    // missing seed
    assert_eq!(camcond(&["corrupt", "--input", p(&input), "--output", p(&out), "--recipe", DEFOCUS7]).status.code(), Some(2));
    // invalid ordering
    let bad = r#"{"stages":[{"kind":"blur","blur":{"type":"identity"}},{"kind":"noise","sources":["photon"],"sigma":5}]}"#;
    assert_eq!(camcond(&["corrupt", "--input", p(&input), "--output", p(&out), "--recipe", bad, "--seed", "1"]).status.code(), Some(2));
    // empty input directory
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let r = camcond(&["--json", "corrupt", "--input", p(&empty), "--output", p(&out), "--recipe", DEFOCUS7, "--seed", "1"]);
    assert_eq!(r.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!((v["status"].as_str(), v["kind"].as_str()), (Some("error"), Some("data")));
    // sidecars missing
    assert_eq!(camcond(&["evaluate", "--input", p(&input), "--output", p(&out)]).status.code(), Some(3));
    // unknown figure
    assert_eq!(camcond(&["reproduce", "fig99", "--seed", "1", "--output", p(&out)]).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 2);
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 4\ninput = {:?}\noutput = {:?}\n[[recipe.stages]]\nkind = \"blur\"\nblur = {{ type = \"defocus\", diameter = 3 }}\n",
            p(&input),
            p(&out)
        ),
    )
    .unwrap();
    assert!(camcond(&["--config", p(&cfg), "corrupt"]).status.success());
    assert_eq!(sidecars(&out)[0].run_config["seed"], 4);
    assert!(camcond(&["--config", p(&cfg), "corrupt", "--seed", "11"]).status.success());
    let cars = sidecars(&out);
    assert_eq!(cars[0].run_config["seed"], 11);
    assert_eq!(cars[0].truth.kernels[0].meta.extent_px, 3.0);

    std::fs::write(&cfg, "seed = 4\nnoise = [\"pca\", \"wavelet\"]\n").unwrap();
    assert_eq!(camcond(&["--config", p(&cfg), "estimate", "--input", p(&input), "--output", "x"]).status.code(), Some(2));
    std::fs::write(&cfg, "sed = 4\n").unwrap();
    assert_eq!(camcond(&["--config", p(&cfg), "estimate", "--input", p(&input), "--output", "x"]).status.code(), Some(2));
}

#[test]
fn estimate_writes_json_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let input = inputs(tmp.path(), 2);
    let out = tmp.path().join("est.jsonl");
    let r = camcond(&["estimate", "--input", p(&input), "--output", p(&out), "--noise", "pca", "--blur", "mtf-spectral"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["run_config"]["subcommand"], "estimate");
    // two 256x256 images: four noise tiles and one blur batch each
    assert_eq!(lines.iter().filter(|l| l["kind"] == "noise").count(), 8);
    assert_eq!(lines.iter().filter(|l| l["kind"] == "blur").count(), 2);
    // the oracle needs sidecars
    let r = camcond(&["estimate", "--input", p(&input), "--output", p(&out), "--blur", "mtf-oracle"]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn build_iopc_matches_library_and_feeds_control() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("iopc");
    let r = camcond(&["build-iopc", "--seed", "21", "--scenes", "3", "--output", p(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let built = Iopc::load(out.join("iopc.json")).unwrap();
    let cfg = ReproduceConfig {
        scenes: 3,
        ..ReproduceConfig::new(21)
    };
    assert_eq!(built, control_iopc(&cfg).unwrap());

    let decision = tmp.path().join("action.json");
    let r = camcond(&[
        "--json", "control", "--iopc", p(&out.join("iopc.json")), "--exposure-s", "0.028", "--iso", "1",
        "--sigma-hat", "4", "--mtf-hat", "0.3", "--output", p(&decision),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&decision).unwrap()).unwrap();
    let a = &v["action"];
    let (t, iso) = (a["new_exposure_s"].as_f64().unwrap(), a["new_iso"].as_f64().unwrap());
    assert!((t * iso - 0.028).abs() < 1e-12);
    assert!(a["predicted_ap_after"].as_f64() >= a["predicted_ap_before"].as_f64());
    assert_eq!(v["run_config"]["subcommand"], "control");
}

#[test]
fn reproduce_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert!(camcond(&["reproduce", "table2", "--seed", "7", "--output", p(&out)]).status.success());
    let text = std::fs::read_to_string(out.join("table2.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# run_config={"));
    assert!(lines.next().unwrap().starts_with("d1_px,sigma_dn,mae_h,mae_v,amae,expected_amae"));
    assert_eq!(lines.count(), 4);

    assert!(camcond(&["reproduce", "fig10-walkthrough", "--seed", "7", "--output", p(&out)]).status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("fig10_walkthrough.json")).unwrap()).unwrap();
    assert_eq!(v["states"].as_array().unwrap().len(), 4);
    assert_eq!(v["run_config"]["seed"], 7);
}

#[test]
fn reproduce_heat_map() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert!(camcond(&["reproduce", "fig9-heat", "--seed", "7", "--scenes", "2", "--output", p(&out)]).status.success());
    let text = std::fs::read_to_string(out.join("fig9_heat.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    // header plus one row per sigma, one column per MTF value
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.split(',').count() == 7));
}
