//! Blind noise-level and MTF estimation.
//!
//! Every estimator is immutable after construction, deterministic and
//! `Send + Sync`, so a [`Registry`] can be shared across threads.

mod bf;
mod pca;
mod spectral;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bf::{estimate_noise_bf, BfEstimator};
pub use pca::{estimate_noise_pca, PcaEstimator};
pub use spectral::{estimate_mtf_spectral, ReferenceSpectrum, SpectralEstimator, DEFAULT_ALPHA, MAX_BATCH};

use crate::error::{Error, Result};
use crate::image::{Patch, NOISE_PATCH};
use crate::mtf::MtfSamples;
use crate::pipeline::GroundTruthBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub sigma_hat: f64,
    pub method: String,
    pub origin: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtfEstimate {
    pub mtf: MtfSamples,
    pub method: String,
    /// Origin of the first patch of the batch.
    pub origin: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Samples clamped into `[0, 1]`.
    #[serde(default)]
    pub clamp_count: usize,
}

pub trait NoiseEstimator: Send + Sync {
    fn id(&self) -> &str;
    fn estimate(&self, patch: &Patch<'_>) -> Result<NoiseEstimate>;
}

/// Input to a blur estimator: image patches plus, for oracles, the
/// corruption ground truth.
#[derive(Clone, Copy)]
pub struct BlurInput<'a, 'b> {
    pub patches: &'a [Patch<'b>],
    pub truth: Option<&'a GroundTruthBundle>,
}

pub trait BlurEstimator: Send + Sync {
    fn id(&self) -> &str;
    fn estimate(&self, input: BlurInput<'_, '_>) -> Result<MtfEstimate>;
}

pub(crate) fn check_noise_patch(patch: &Patch<'_>) -> Result<()> {
    if patch.size() != NOISE_PATCH {
        return Err(Error::PatchSize {
            expected: NOISE_PATCH,
            width: patch.size(),
            height: patch.size(),
        });
    }
    Ok(())
}

/// Product of every kernel MTF recorded in `bundle`.
pub fn estimate_mtf_oracle(bundle: &GroundTruthBundle) -> Result<MtfEstimate> {
    if bundle.kernels.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    Ok(MtfEstimate {
        mtf: bundle.combined_mtf(),
        method: "mtf-oracle".into(),
        origin: (0, 0),
        batch: None,
        clamp_count: 0,
    })
}

/// Known-kernel stand-in for a learned MTF estimator.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleEstimator;

impl BlurEstimator for OracleEstimator {
    fn id(&self) -> &str {
        "mtf-oracle"
    }

    fn estimate(&self, input: BlurInput<'_, '_>) -> Result<MtfEstimate> {
        let mut e = estimate_mtf_oracle(input.truth.ok_or(Error::NoGroundTruth)?)?;
        if let Some(p) = input.patches.first() {
            e.origin = p.origin();
        }
        Ok(e)
    }
}

/// Estimators keyed by string id.
#[derive(Clone, Default)]
pub struct Registry {
    noise: BTreeMap<String, Arc<dyn NoiseEstimator>>,
    blur: BTreeMap<String, Arc<dyn BlurEstimator>>,
}

impl Registry {
    /// `bf`, `pca`, `mtf-oracle` and `mtf-spectral` (default reference).
    pub fn builtin() -> Self {
        let mut r = Self::default();
        r.register_noise(Arc::new(BfEstimator));
        r.register_noise(Arc::new(PcaEstimator));
        r.register_blur(Arc::new(OracleEstimator));
        r.register_blur(Arc::new(SpectralEstimator::new(ReferenceSpectrum::default_calibration())));
        r
    }

    pub fn register_noise(&mut self, e: Arc<dyn NoiseEstimator>) {
        self.noise.insert(e.id().to_string(), e);
    }

    pub fn register_blur(&mut self, e: Arc<dyn BlurEstimator>) {
        self.blur.insert(e.id().to_string(), e);
    }

    pub fn noise(&self, id: &str) -> Result<Arc<dyn NoiseEstimator>> {
        self.noise.get(id).cloned().ok_or_else(|| Error::UnknownEstimator(id.into()))
    }

    pub fn blur(&self, id: &str) -> Result<Arc<dyn BlurEstimator>> {
        self.blur.get(id).cloned().ok_or_else(|| Error::UnknownEstimator(id.into()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.noise.contains_key(id) || self.blur.contains_key(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.noise.keys().chain(self.blur.keys()).cloned().collect()
    }
}
