//! Reference MTF estimation from image spectra.
//!
//! A sharp natural patch has an amplitude spectrum close to a power law
//! `c · f^-α`. Blur multiplies that spectrum by the MTF, so the ratio of a
//! patch's spectrum to the calibrated power law, measured in thin strips
//! along the horizontal and vertical frequency axes, estimates the MTF in
//! each direction.
//!
//! Spectra are Welch averages: Hann-windowed 96x96 segments at a 48 px
//! step, nine per patch. Strips are one bin wide on each side of the axis
//! so that blur along the other direction barely leaks in.

use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{BlurEstimator, BlurInput, MtfEstimate};
use crate::error::{Error, Result};
use crate::fft::{bin_freq, fft2};
use crate::image::{tile_patches, Patch, BLUR_PATCH};
use crate::mtf::{Direction, MtfSamples, FREQUENCIES};
use crate::noise::std_dev;
use crate::scene::power_law_texture;

/// Largest batch averaged into one estimate.
pub const MAX_BATCH: usize = 4;
/// Default spectral slope of natural images.
pub const DEFAULT_ALPHA: f64 = 1.2;
/// Default half-width, in bins, of the strip around each frequency axis.
pub const DEFAULT_STRIP_BINS: f64 = 1.0;
/// Default relative half-width of the band around each sample frequency.
pub const DEFAULT_BAND: f64 = 0.3;
const SEGMENT: usize = 96;
const SEGMENT_STEP: usize = 48;
/// Radius, in bins, of the ring used for contrast normalization.
const LOW_RING: f64 = 2.5;
/// Patches whose standard deviation is below this (DN) carry no usable spectrum.
const MIN_TEXTURE_STD: f64 = 1.0;
const CALIBRATION_SEED: u64 = 0x5EC7_CA1B;

/// Power-law amplitude model `c_dir · f^-alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpectrum {
    pub alpha: f64,
    pub c_h: f64,
    pub c_v: f64,
    /// Binning used for fitting and estimation.
    #[serde(default = "default_strip")]
    pub strip_bins: f64,
    #[serde(default = "default_band")]
    pub band: f64,
    /// Whitened amplitude of the calibration on the lowest-frequency ring.
    /// When present, each patch is rescaled to this level before the
    /// ratio is taken, which makes the estimate independent of contrast.
    #[serde(default)]
    pub low_level: Option<f64>,
}

fn default_strip() -> f64 {
    DEFAULT_STRIP_BINS
}

fn default_band() -> f64 {
    DEFAULT_BAND
}

impl ReferenceSpectrum {
    pub fn at(&self, f: f64, dir: Direction) -> f64 {
        let c = match dir {
            Direction::H => self.c_h,
            Direction::V => self.c_v,
        };
        c * f.powf(-self.alpha)
    }

    /// Fit on sharp patches. With `alpha = None` the slope is fitted too
    /// (log-log least squares); otherwise only the scales are.
    pub fn fit(patches: &[Patch<'_>], alpha: Option<f64>) -> Result<Self> {
        Self::fit_binned(patches, alpha, DEFAULT_STRIP_BINS, DEFAULT_BAND)
    }

    pub fn fit_binned(patches: &[Patch<'_>], alpha: Option<f64>, strip_bins: f64, band: f64) -> Result<Self> {
        let bins = Bins { strip_bins, band };
        let spectra: Vec<Spectrum> = patches.iter().map(Spectrum::of).collect::<Result<_>>()?;
        if spectra.is_empty() {
            return Err(Error::Empty("calibration batch"));
        }
        let freqs = distinct_frequencies();
        // mean band amplitude per direction and frequency
        let level = |dir: Direction, f: f64| {
            spectra.iter().map(|s| s.band_mean(&bins, f, dir, |_| 1.0)).sum::<f64>() / spectra.len() as f64
        };
        let alpha = match alpha {
            Some(a) => a,
            None => {
                let pts: Vec<(f64, f64)> = [Direction::H, Direction::V]
                    .iter()
                    .flat_map(|&d| freqs.iter().map(move |&f| (f.ln(), level(d, f).ln())))
                    .collect();
                let n = pts.len() as f64;
                let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
                let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
                let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
                let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
                -sxy / sxx
            }
        };
        let scale = |dir: Direction| {
            let m = spectra
                .iter()
                .map(|s| freqs.iter().map(|&f| s.band_mean(&bins, f, dir, |r| r.powf(alpha))).sum::<f64>())
                .sum::<f64>();
            m / (spectra.len() * freqs.len()) as f64
        };
        let low = spectra.iter().map(|s| s.low_level(alpha)).sum::<f64>() / spectra.len() as f64;
        Ok(Self {
            alpha,
            c_h: scale(Direction::H),
            c_v: scale(Direction::V),
            strip_bins,
            band,
            low_level: Some(low),
        })
    }

    /// Seeded sharp texture holding the default calibration batch: its
    /// four 192x192 tiles.
    pub fn calibration_image() -> crate::GrayImage {
        power_law_texture(2 * BLUR_PATCH, 2 * BLUR_PATCH, DEFAULT_ALPHA, 128.0, 20.0, CALIBRATION_SEED)
            .expect("valid calibration size")
    }

    /// Reference fitted with the default slope on the tiles of
    /// [`Self::calibration_image`].
    pub fn default_calibration() -> Self {
        static R: OnceLock<ReferenceSpectrum> = OnceLock::new();
        *R.get_or_init(|| {
            let img = Self::calibration_image();
            let tiles = tile_patches(&img, BLUR_PATCH, BLUR_PATCH).expect("fits");
            Self::fit(&tiles, Some(DEFAULT_ALPHA)).expect("textured")
        })
    }
}

/// Evaluation frequency for a grid frequency: values above Nyquist alias
/// back, matching the periodic kernel spectrum.
fn eval_freq(f: f64) -> f64 {
    if f > 0.5 {
        1.0 - f
    } else {
        f
    }
}

fn distinct_frequencies() -> Vec<f64> {
    let mut v: Vec<f64> = FREQUENCIES.iter().map(|&f| eval_freq(f)).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

struct Bins {
    strip_bins: f64,
    band: f64,
}

/// Windowed amplitude spectrum of one patch.
struct Spectrum {
    n: usize,
    amp: Vec<f64>,
}

impl Spectrum {
    fn of(patch: &Patch<'_>) -> Result<Self> {
        let n = patch.size();
        if n != BLUR_PATCH {
            return Err(Error::PatchSize {
                expected: BLUR_PATCH,
                width: n,
                height: n,
            });
        }
        let img = patch.to_image();
        if std_dev(img.data()) < MIN_TEXTURE_STD {
            return Err(Error::InsufficientTexture);
        }
        let seg = SEGMENT;
        let hann: Vec<f64> = (0..seg)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
            .collect();
        let starts: Vec<usize> = (0..=n - seg).step_by(SEGMENT_STEP).collect();
        let mut amp = vec![0.0; seg * seg];
        for &y0 in &starts {
            for &x0 in &starts {
                let mut mean = 0.0;
                for y in 0..seg {
                    mean += img.row(y0 + y)[x0..x0 + seg].iter().sum::<f64>();
                }
                mean /= (seg * seg) as f64;
                let mut buf: Vec<Complex<f64>> = (0..seg * seg)
                    .map(|i| {
                        let (x, y) = (i % seg, i / seg);
                        Complex::new((img.get(x0 + x, y0 + y) - mean) * hann[x] * hann[y], 0.0)
                    })
                    .collect();
                fft2(&mut buf, seg, seg, false);
                for (a, c) in amp.iter_mut().zip(&buf) {
                    *a += c.norm();
                }
            }
        }
        let k = (starts.len() * starts.len()) as f64;
        amp.iter_mut().for_each(|a| *a /= k);
        Ok(Self { n: seg, amp })
    }

    /// Mean of `amp · weight(r)` over bins within the strip along `dir`
    /// and the radial band around `f`.
    fn band_mean(&self, bins: &Bins, f: f64, dir: Direction, weight: impl Fn(f64) -> f64) -> f64 {
        let strip = bins.strip_bins / self.n as f64 + 1e-12;
        let half = (bins.band * f).max(1.0 / self.n as f64);
        let mut sum = 0.0;
        let mut count = 0usize;
        for ky in 0..self.n {
            let fy = bin_freq(ky, self.n);
            for kx in 0..self.n {
                let fx = bin_freq(kx, self.n);
                let r = fx.hypot(fy);
                if (r - f).abs() > half || r == 0.0 {
                    continue;
                }
                let (along, across) = match dir {
                    Direction::H => (fx.abs(), fy.abs()),
                    Direction::V => (fy.abs(), fx.abs()),
                };
                if across > strip || along == 0.0 {
                    continue;
                }
                sum += self.amp[ky * self.n + kx] * weight(r);
                count += 1;
            }
        }
        sum / count as f64
    }

    /// Mean of `amp · r^alpha` over the nonzero bins within `LOW_RING`
    /// bins of DC.
    fn low_level(&self, alpha: f64) -> f64 {
        let limit = LOW_RING / self.n as f64 + 1e-12;
        let mut sum = 0.0;
        let mut count = 0usize;
        for ky in 0..self.n {
            let fy = bin_freq(ky, self.n);
            for kx in 0..self.n {
                let r = bin_freq(kx, self.n).hypot(fy);
                if r > 0.0 && r <= limit {
                    sum += self.amp[ky * self.n + kx] * r.powf(alpha);
                    count += 1;
                }
            }
        }
        sum / count as f64
    }

    /// Per-direction MTF samples relative to `reference`, unclamped.
    fn ratios(&self, reference: &ReferenceSpectrum) -> MtfSamples {
        let gain = match reference.low_level {
            Some(l) => l / self.low_level(reference.alpha),
            None => 1.0,
        };
        let bins = Bins {
            strip_bins: reference.strip_bins,
            band: reference.band,
        };
        let dir = |d: Direction| -> [f64; 8] {
            std::array::from_fn(|i| {
                let f = eval_freq(FREQUENCIES[i]);
                gain * self.band_mean(&bins, f, d, |r| 1.0 / reference.at(r, d))
            })
        };
        MtfSamples::new(dir(Direction::H), dir(Direction::V))
    }
}

/// Estimate the MTF of a batch of up to [`MAX_BATCH`] 192x192 patches.
/// Untextured patches are skipped; if none remain the batch is rejected.
pub fn estimate_mtf_spectral(patches: &[Patch<'_>], reference: &ReferenceSpectrum) -> Result<MtfEstimate> {
    let first = patches.first().ok_or(Error::Empty("patch batch"))?;
    let batch = &patches[..patches.len().min(MAX_BATCH)];
    let mut sum = MtfSamples::new([0.0; 8], [0.0; 8]);
    let mut used = 0usize;
    let mut clamp_count = 0usize;
    for p in batch {
        let s = match Spectrum::of(p) {
            Ok(s) => s,
            Err(Error::InsufficientTexture) => continue,
            Err(e) => return Err(e),
        };
        let mut m = s.ratios(reference);
        clamp_count += m.clamp_unit();
        for i in 0..8 {
            sum.h[i] += m.h[i];
            sum.v[i] += m.v[i];
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientTexture);
    }
    let k = used as f64;
    sum.h.iter_mut().chain(sum.v.iter_mut()).for_each(|v| *v /= k);
    Ok(MtfEstimate {
        mtf: sum,
        method: "mtf-spectral".into(),
        origin: first.origin(),
        batch: Some(used),
        clamp_count,
    })
}

/// [`estimate_mtf_spectral`] bound to a reference spectrum.
#[derive(Clone, Copy, Debug)]
pub struct SpectralEstimator {
    pub reference: ReferenceSpectrum,
}

impl SpectralEstimator {
    pub fn new(reference: ReferenceSpectrum) -> Self {
        Self { reference }
    }
}

impl BlurEstimator for SpectralEstimator {
    fn id(&self) -> &str {
        "mtf-spectral"
    }

    fn estimate(&self, input: BlurInput<'_, '_>) -> Result<MtfEstimate> {
        estimate_mtf_spectral(input.patches, &self.reference)
    }
}
