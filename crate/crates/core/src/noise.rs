//! Sensor noise synthesis.
//!
//! Three time-varying sources are modelled, in DN at unit gain:
//!
//! * photon shot noise: Poisson with mean equal to the pixel value, so its
//!   variance tracks the signal;
//! * dark current shot noise (DCSN): zero-mean Gaussian whose variance is
//!   proportional to exposure time and grows with temperature through an
//!   Arrhenius factor;
//! * readout noise: independent reset (kTC) and source-follower Gaussian
//!   components depending on temperature only.
//!
//! Absolute electron bookkeeping is collapsed into [`scale_to_sigma`], which
//! amplifies the raw noise to a calibrated target standard deviation. The
//! physical constants below are placeholders that satisfy the stated
//! proportionalities; they do not describe a particular sensor.

use rand_distr::{Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::seed;

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV: f64 = 8.617_333e-5;
/// Dark-current activation energy (eV).
pub const DARK_ACTIVATION_EV: f64 = 0.6;
/// Reference temperature for the dark rate and read-noise constants.
pub const REFERENCE_TEMP_K: f64 = 300.0;
/// Dark signal variance accumulated per second at the reference temperature (DN²/s).
pub const DARK_RATE_REF: f64 = 25.0;
/// Reset (kTC) noise at the reference temperature (DN).
pub const RESET_SIGMA_REF: f64 = 2.0;
/// Source-follower noise at the reference temperature (DN).
pub const SOURCE_FOLLOWER_SIGMA_REF: f64 = 1.5;
/// Above this mean, Poisson draws use the Gaussian limit.
pub const POISSON_GAUSS_SWITCH: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSource {
    Photon,
    Dcsn,
    Readout,
}

/// Where a noise stage sits relative to the blur stages of a pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePosition {
    /// No blur anywhere in the pipeline.
    Standalone,
    /// Before every blur stage.
    PreBlur,
    /// After every blur stage.
    PostBlur,
    /// Between blur stages.
    MidPipeline,
}

/// Parameters of one noise stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sources: Vec<NoiseSource>,
    pub temperature_k: f64,
    pub exposure_s: f64,
    pub target_sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    /// Isolated-source protocol: T = 330 K, t_exp = 0.1 s.
    pub fn isolated(sources: Vec<NoiseSource>, target_sigma: f64, seed: u64) -> Self {
        Self {
            sources,
            temperature_k: 330.0,
            exposure_s: 0.1,
            target_sigma,
            seed,
        }
    }

    /// Combined protocol: every source, T ~ U[300, 330] K and
    /// t_exp ~ U[0.002, 1] s drawn from the seed.
    pub fn combined(target_sigma: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, 0xC0B1));
        let t = Uniform::new_inclusive(300.0, 330.0).expect("valid range").sample(&mut rng);
        let e = Uniform::new_inclusive(0.002, 1.0).expect("valid range").sample(&mut rng);
        Self {
            sources: vec![NoiseSource::Photon, NoiseSource::Dcsn, NoiseSource::Readout],
            temperature_k: t,
            exposure_s: e,
            target_sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.target_sigma;
        if !(s == 0.0 || (1.0..=30.0).contains(&s)) {
            return Err(Error::InvalidParameter(format!(
                "target sigma {s} outside {{0}} ∪ [1, 30] DN"
            )));
        }
        if !(self.temperature_k > 0.0) || !(self.exposure_s >= 0.0) {
            return Err(Error::InvalidParameter("temperature must be positive and exposure non-negative".into()));
        }
        if self.sources.is_empty() {
            return Err(Error::InvalidParameter("noise stage without sources".into()));
        }
        Ok(())
    }

    pub fn has(&self, source: NoiseSource) -> bool {
        self.sources.contains(&source)
    }
}

/// Realized noise of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseGroundTruth {
    /// Standard deviation of the additive field actually applied (DN).
    pub sigma: f64,
    pub sources: Vec<NoiseSource>,
    pub position: NoisePosition,
    /// Index of the stage within its pipeline.
    pub stage: usize,
    pub temperature_k: f64,
    pub exposure_s: f64,
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Replace every pixel by a Poisson draw with mean equal to its value.
/// Returns the noisy image and the realized deviation statistics.
pub fn photon_shot(img: &GrayImage, seed: u64) -> Result<(GrayImage, NoiseGroundTruth)> {
    let field = photon_field(img, seed)?;
    let sigma = std_dev(&field);
    let noisy = img.add_field(&field)?;
    Ok((
        noisy,
        NoiseGroundTruth {
            sigma,
            sources: vec![NoiseSource::Photon],
            position: NoisePosition::Standalone,
            stage: 0,
            temperature_k: f64::NAN,
            exposure_s: f64::NAN,
        },
    ))
}

/// Deviation field `Poisson(I) - I`, sampled in row-major order.
pub fn photon_field(img: &GrayImage, seed: u64) -> Result<Vec<f64>> {
    if let Some(&bad) = img.data().iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeIntensity(bad));
    }
    let mut rng = seed::rng(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    Ok(img
        .data()
        .iter()
        .map(|&lambda| {
            if lambda == 0.0 {
                0.0
            } else if lambda > POISSON_GAUSS_SWITCH {
                lambda.sqrt() * unit.sample(&mut rng)
            } else {
                let k: f64 = Poisson::new(lambda).expect("positive mean").sample(&mut rng);
                k - lambda
            }
        })
        .collect())
}

/// Dark-signal variance accumulated over `exposure_s` at `temperature_k`.
pub fn dark_variance(temperature_k: f64, exposure_s: f64) -> f64 {
    let arrhenius = (-DARK_ACTIVATION_EV / BOLTZMANN_EV * (1.0 / temperature_k - 1.0 / REFERENCE_TEMP_K)).exp();
    DARK_RATE_REF * arrhenius * exposure_s
}

fn gaussian_field(len: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; len];
    }
    let mut rng = seed::rng(seed);
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    (0..len).map(|_| n.sample(&mut rng)).collect()
}

/// Signal-independent dark current shot noise field of `width * height` values.
pub fn dcsn(shape: (usize, usize), config: &NoiseConfig, seed: u64) -> Vec<f64> {
    let var = dark_variance(config.temperature_k, config.exposure_s);
    gaussian_field(shape.0 * shape.1, var.sqrt(), seed)
}

/// Reset and source-follower standard deviations at a temperature.
pub fn readout_sigmas(temperature_k: f64) -> (f64, f64) {
    let reset = RESET_SIGMA_REF * (temperature_k / REFERENCE_TEMP_K).sqrt();
    let sf = SOURCE_FOLLOWER_SIGMA_REF * (1.0 + 0.002 * (temperature_k - REFERENCE_TEMP_K));
    (reset, sf.max(0.0))
}

/// The two readout components, each drawn from its own sub-seed.
pub fn readout_components(shape: (usize, usize), config: &NoiseConfig, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let (reset, sf) = readout_sigmas(config.temperature_k);
    let len = shape.0 * shape.1;
    (
        gaussian_field(len, reset, seed::derive(seed, 0)),
        gaussian_field(len, sf, seed::derive(seed, 1)),
    )
}

/// Readout noise field: reset plus source-follower noise.
pub fn readout(shape: (usize, usize), config: &NoiseConfig, seed: u64) -> Vec<f64> {
    let (a, b) = readout_components(shape, config, seed);
    a.into_iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Multiply a field by the single scalar that makes its standard deviation
/// equal to `target_sigma`. Returns the scaled field and the scalar.
pub fn scale_to_sigma(field: &[f64], target_sigma: f64) -> Result<(Vec<f64>, f64)> {
    if target_sigma == 0.0 {
        return Ok((vec![0.0; field.len()], 0.0));
    }
    let s = std_dev(field);
    if s == 0.0 {
        return Err(Error::ZeroField(target_sigma));
    }
    let k = target_sigma / s;
    Ok((field.iter().map(|v| v * k).collect(), k))
}

/// Raw (unscaled) additive field for a noise configuration applied to `img`.
pub fn raw_field(img: &GrayImage, config: &NoiseConfig) -> Result<Vec<f64>> {
    let shape = (img.width(), img.height());
    let len = shape.0 * shape.1;
    let mut field = vec![0.0; len];
    let mut add = |f: Vec<f64>| field.iter_mut().zip(f).for_each(|(a, b)| *a += b);
    if config.has(NoiseSource::Photon) {
        add(photon_field(img, seed::derive(config.seed, 1))?);
    }
    if config.has(NoiseSource::Dcsn) {
        add(dcsn(shape, config, seed::derive(config.seed, 2)));
    }
    if config.has(NoiseSource::Readout) {
        add(readout(shape, config, seed::derive(config.seed, 3)));
    }
    Ok(field)
}

/// Apply one noise stage: synthesize every configured source, amplify the sum
/// to the target sigma and add it to the image.
pub fn apply_noise(img: &GrayImage, config: &NoiseConfig) -> Result<(GrayImage, NoiseGroundTruth)> {
    config.validate()?;
    let raw = raw_field(img, config)?;
    let (field, _) = scale_to_sigma(&raw, config.target_sigma)?;
    let sigma = std_dev(&field);
    let mut sources = config.sources.clone();
    sources.sort();
    sources.dedup();
    Ok((
        img.add_field(&field)?,
        NoiseGroundTruth {
            sigma,
            sources,
            position: NoisePosition::Standalone,
            stage: 0,
            temperature_k: config.temperature_k,
            exposure_s: config.exposure_s,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(v: &[f64]) -> f64 {
        std_dev(v).powi(2)
    }

    #[test]
    fn zero_signal_has_no_photon_noise() {
        let img = GrayImage::constant(64, 64, 0.0).unwrap();
        let (out, gt) = photon_shot(&img, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(gt.sigma, 0.0);
    }

    #[test]
    fn negative_input_rejected() {
        let img = GrayImage::new(2, 1, vec![1.0, -0.5]).unwrap();
        assert!(matches!(photon_shot(&img, 1), Err(Error::NegativeIntensity(_))));
    }

    #[test]
    fn photon_sigma_scales_with_sqrt_signal() {
        let dark = GrayImage::constant(400, 400, 100.0).unwrap();
        let bright = GrayImage::constant(400, 400, 225.0).unwrap();
        let (_, a) = photon_shot(&dark, 3).unwrap();
        let (_, b) = photon_shot(&bright, 4).unwrap();
        assert!((b.sigma - 15.0).abs() < 0.15, "{}", b.sigma);
        assert!((b.sigma / a.sigma - 1.5).abs() < 0.03);
    }

    #[test]
    fn gaussian_limit_above_switch() {
        let img = GrayImage::constant(300, 300, 4000.0).unwrap();
        let (_, gt) = photon_shot(&img, 9).unwrap();
        assert!((gt.sigma - 4000f64.sqrt()).abs() / 4000f64.sqrt() < 0.02);
    }

    #[test]
    fn dcsn_scales_with_exposure_and_temperature() {
        let mut c = NoiseConfig::isolated(vec![NoiseSource::Dcsn], 10.0, 0);
        c.exposure_s = 0.0;
        assert!(dcsn((32, 32), &c, 5).iter().all(|&v| v == 0.0));

        c.exposure_s = 0.1;
        let a = var(&dcsn((500, 500), &c, 5));
        c.exposure_s = 0.4;
        let b = var(&dcsn((500, 500), &c, 6));
        assert!((b / a - 4.0).abs() < 0.2, "{}", b / a);

        c.temperature_k = 300.0;
        let cold = var(&dcsn((200, 200), &c, 7));
        c.temperature_k = 330.0;
        let hot = var(&dcsn((200, 200), &c, 7));
        assert!(hot > cold);
    }

    #[test]
    fn readout_components_add() {
        let c = NoiseConfig::isolated(vec![NoiseSource::Readout], 10.0, 0);
        let (a, b) = readout_components((1000, 1000), &c, 11);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let rel = var(&sum) / (var(&a) + var(&b));
        assert!((rel - 1.0).abs() < 0.03, "{rel}");
        let mean = sum.iter().sum::<f64>() / sum.len() as f64;
        assert!(mean.abs() < 3.0 * std_dev(&sum) / 1000.0);
        assert_eq!(readout((64, 64), &c, 11), readout((64, 64), &c, 11));
    }

    #[test]
    fn scaling_examples() {
        let (f, k) = scale_to_sigma(&[1.0, -2.0, 3.0], 0.0).unwrap();
        assert_eq!(k, 0.0);
        assert!(f.iter().all(|&v| v == 0.0));

        let g = gaussian_field(128 * 128, 2.0, 17);
        let (f, k) = scale_to_sigma(&g, 10.0).unwrap();
        assert!((k - 5.0).abs() < 0.05 * 5.0 / 10.0 + 0.05, "{k}");
        assert!((std_dev(&f) - 10.0).abs() < 0.05);

        assert!(matches!(scale_to_sigma(&[0.0; 16], 5.0), Err(Error::ZeroField(_))));
    }

    #[test]
    fn target_range_validated() {
        assert!(NoiseConfig::isolated(vec![NoiseSource::Dcsn], 0.5, 0).validate().is_err());
        assert!(NoiseConfig::isolated(vec![NoiseSource::Dcsn], 31.0, 0).validate().is_err());
        assert!(NoiseConfig::isolated(vec![NoiseSource::Dcsn], 0.0, 0).validate().is_ok());
        assert!(NoiseConfig::isolated(vec![], 5.0, 0).validate().is_err());
    }

    #[test]
    fn combined_preset_ranges() {
        for s in 0..50 {
            let c = NoiseConfig::combined(10.0, s);
            assert!((300.0..=330.0).contains(&c.temperature_k));
            assert!((0.002..=1.0).contains(&c.exposure_s));
            assert_eq!(c.sources.len(), 3);
        }
    }
}
