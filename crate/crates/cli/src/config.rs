//! Run configuration: an optional TOML/JSON file overlaid by command-line
//! flags.

use std::path::{Path, PathBuf};

use camcond::control::{CalibrationTable, CameraBounds, TradeoffModel};
use camcond::mtf::MtfReading;
use camcond::pipeline::Recipe;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{config, CliResult};

pub const NOISE_IDS: [&str; 2] = ["bf", "pca"];
pub const BLUR_IDS: [&str; 2] = ["mtf-oracle", "mtf-spectral"];

/// Everything a subcommand reads. Written verbatim into every artifact.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub subcommand: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<Recipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blur: Option<Vec<String>>,
    /// Camera constants file used by `control`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iopc: Option<PathBuf>,
    /// Ground-truth boxes (JSON lines) for `build-iopc` on real frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reading: Option<MtfReading>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iso: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtf_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<String>,
}

impl RunConfig {
    /// Field-wise overlay: values set in `flags` win.
    pub fn overlay(self, flags: RunConfig) -> RunConfig {
        RunConfig {
            subcommand: if flags.subcommand.is_empty() { self.subcommand } else { flags.subcommand },
            seed: flags.seed.or(self.seed),
            input: flags.input.or(self.input),
            output: flags.output.or(self.output),
            recipe: flags.recipe.or(self.recipe),
            noise: flags.noise.or(self.noise),
            blur: flags.blur.or(self.blur),
            camera: flags.camera.or(self.camera),
            iopc: flags.iopc.or(self.iopc),
            truth: flags.truth.or(self.truth),
            scenes: flags.scenes.or(self.scenes),
            patches: flags.patches.or(self.patches),
            frequency: flags.frequency.or(self.frequency),
            reading: flags.reading.or(self.reading),
            exposure_s: flags.exposure_s.or(self.exposure_s),
            iso: flags.iso.or(self.iso),
            sigma_hat: flags.sigma_hat.or(self.sigma_hat),
            mtf_hat: flags.mtf_hat.or(self.mtf_hat),
            figure: flags.figure.or(self.figure),
        }
    }

    /// Reject estimator ids the registry does not know.
    pub fn check_ids(&self) -> CliResult<()> {
        for (ids, known) in [(&self.noise, &NOISE_IDS), (&self.blur, &BLUR_IDS)] {
            for id in ids.iter().flatten() {
                if !known.contains(&id.as_str()) {
                    return Err(config(format!("unknown estimator id `{id}` (expected one of {})", known.join(", "))));
                }
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| config(format!("`{}` needs an explicit --seed", self.subcommand)))
    }

    pub fn require_input(&self) -> CliResult<&Path> {
        self.input.as_deref().ok_or_else(|| config("missing --input"))
    }

    pub fn require_output(&self) -> CliResult<&Path> {
        self.output.as_deref().ok_or_else(|| config("missing --output"))
    }

    /// Compact JSON, stable for identical configs.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

/// Parse TOML or JSON by extension (`.json` is JSON, anything else TOML).
pub fn parse_file<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
    }
}

/// `--recipe` takes inline JSON or a path to a TOML/JSON file.
pub fn parse_recipe(arg: &str) -> CliResult<Recipe> {
    let recipe: Recipe = if arg.trim_start().starts_with('{') {
        serde_json::from_str(arg).map_err(|e| config(format!("recipe: {e}")))?
    } else {
        parse_file(Path::new(arg))?
    };
    recipe.validate().map_err(|e| config(format!("recipe: {e}")))?;
    Ok(recipe)
}

/// Camera constants for `control`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConstants {
    pub bounds: CameraBounds,
    /// Relative uncertainty of the blur extent prediction.
    pub extent_uncertainty: f64,
    /// Blur extent versus MTF. Defaults to linear motion kernels read in
    /// the performance curve's coordinate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationTable>,
}

impl Default for CameraConstants {
    fn default() -> Self {
        Self {
            bounds: CameraBounds::default(),
            extent_uncertainty: TradeoffModel::default().extent_uncertainty,
            calibration: None,
        }
    }
}

impl CameraConstants {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let c: Self = match path {
            Some(p) => parse_file(p)?,
            None => Self::default(),
        };
        c.bounds.validate().map_err(config)?;
        if !(0.0..1.0).contains(&c.extent_uncertainty) {
            return Err(config("extent_uncertainty must lie in [0, 1)"));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win() {
        let file = RunConfig {
            seed: Some(1),
            scenes: Some(4),
            ..Default::default()
        };
        let flags = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let m = file.overlay(flags);
        assert_eq!((m.seed, m.scenes), (Some(9), Some(4)));
    }

    #[test]
    fn toml_recipe() {
        let text = r#"
            seed = 3
            [[recipe.stages]]
            kind = "blur"
            blur = { type = "defocus", diameter = 7 }
        "#;
        let c: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(c.recipe.unwrap().stages.len(), 1);
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
    }

    #[test]
    fn unknown_ids() {
        let c = RunConfig {
            noise: Some(vec!["pca".into(), "nope".into()]),
            ..Default::default()
        };
        assert!(matches!(c.check_ids(), Err(crate::CliError::Config(_))));
    }
}
