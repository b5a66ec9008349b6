use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge length of the kernel canvas.
pub const DEFAULT_KERNEL_SIZE: usize = 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Identity,
    Defocus,
    LinearMotion,
    NonlinearMotion,
    Composite,
    Custom,
}

/// Provenance carried alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub kind: KernelKind,
    /// Diameter (defocus) or approximate path length (motion), in pixels.
    pub extent_px: f64,
    /// Motion direction in degrees, counter-clockwise from +x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl KernelMeta {
    pub fn of_kind(kind: KernelKind, extent_px: f64) -> Self {
        Self {
            kind,
            extent_px,
            orientation_deg: None,
            linear: None,
            seed: None,
        }
    }
}

/// Square, odd-sized, non-negative PSF whose weights sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
    pub meta: KernelMeta,
}

impl Kernel {
    /// Build from raw non-negative weights; they are normalized to sum 1.
    pub fn from_weights(size: usize, mut weights: Vec<f64>, meta: KernelMeta) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidParameter(format!("kernel size {size} must be odd")));
        }
        if weights.len() != size * size {
            return Err(Error::Dimensions(format!(
                "{} weights for a {size}x{size} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("kernel weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParameter("kernel weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { size, weights, meta })
    }

    /// Single centre tap.
    pub fn identity(size: usize) -> Self {
        let size = if size % 2 == 0 { size + 1 } else { size.max(1) };
        let mut weights = vec![0.0; size * size];
        weights[(size / 2) * size + size / 2] = 1.0;
        Self {
            size,
            weights,
            meta: KernelMeta::of_kind(KernelKind::Identity, 0.0),
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn center(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.size + x]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Non-zero taps as `(dx, dy, w)` offsets from the centre, row-major.
    pub fn taps(&self) -> Vec<(isize, isize, f64)> {
        let c = self.center() as isize;
        let mut out = Vec::new();
        for y in 0..self.size {
            for x in 0..self.size {
                let w = self.weight(x, y);
                if w != 0.0 {
                    out.push((x as isize - c, y as isize - c, w));
                }
            }
        }
        out
    }

    /// Full linear convolution with another kernel; the result has size
    /// `a + b - 1`.
    pub fn compose(&self, other: &Kernel) -> Kernel {
        let n = self.size + other.size - 1;
        let mut weights = vec![0.0; n * n];
        for (ay, arow) in self.weights.chunks_exact(self.size).enumerate() {
            for (ax, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (by, brow) in other.weights.chunks_exact(other.size).enumerate() {
                    let base = (ay + by) * n + ax;
                    for (bx, &b) in brow.iter().enumerate() {
                        weights[base + bx] += a * b;
                    }
                }
            }
        }
        Kernel {
            size: n,
            weights,
            meta: KernelMeta::of_kind(KernelKind::Composite, self.meta.extent_px + other.meta.extent_px),
        }
    }

    /// Rotate by 90 degrees counter-clockwise.
    pub fn rotate90(&self) -> Kernel {
        let n = self.size;
        let mut weights = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                // (x, y) -> (y, n-1-x)
                weights[(n - 1 - x) * n + y] = self.weight(x, y);
            }
        }
        let mut meta = self.meta.clone();
        meta.orientation_deg = meta.orientation_deg.map(|a| (a + 90.0) % 360.0);
        Kernel { size: n, weights, meta }
    }

    /// Mirror across the main diagonal.
    pub fn transpose(&self) -> Kernel {
        let n = self.size;
        let mut weights = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                weights[x * n + y] = self.weight(x, y);
            }
        }
        Kernel {
            size: n,
            weights,
            meta: self.meta.clone(),
        }
    }

    /// Weights rescaled so the maximum maps to 255, for viewing.
    pub fn to_view_image(&self) -> crate::image::GrayImage {
        let max = self.weights.iter().cloned().fold(0.0, f64::max);
        let data = self.weights.iter().map(|w| w / max * 255.0).collect();
        crate::image::GrayImage::new(self.size, self.size, data).expect("kernel is non-empty")
    }
}

/// Circle-of-confusion diameter for a thin lens focused at `s1_focused`
/// imaging an object at `s2_actual`. All lengths share one unit.
pub fn coc_diameter(aperture: f64, focal_length: f64, s1_focused: f64, s2_actual: f64) -> Result<f64> {
    if s1_focused <= focal_length {
        return Err(Error::CannotFocus {
            s1: s1_focused,
            focal: focal_length,
        });
    }
    if s2_actual <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "object distance must be positive, got {s2_actual}"
        )));
    }
    Ok(aperture * focal_length / (s1_focused - focal_length) * (s2_actual - s1_focused).abs() / s2_actual)
}

/// Uniform disk of odd diameter `d` (radius `(d-1)/2`) on the default canvas.
pub fn defocus_kernel(diameter_px: usize) -> Result<Kernel> {
    defocus_kernel_sized(diameter_px, DEFAULT_KERNEL_SIZE)
}

pub fn defocus_kernel_sized(diameter_px: usize, size: usize) -> Result<Kernel> {
    if diameter_px == 0 || diameter_px % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "defocus diameter {diameter_px} must be odd and positive"
        )));
    }
    if diameter_px > size {
        return Err(Error::InvalidParameter(format!(
            "defocus diameter {diameter_px} exceeds kernel size {size}"
        )));
    }
    let r = (diameter_px as i64 - 1) / 2;
    let c = (size / 2) as i64;
    let mut weights = vec![0.0; size * size];
    for y in 0..size as i64 {
        for x in 0..size as i64 {
            if (x - c).pow(2) + (y - c).pow(2) <= r * r {
                weights[(y * size as i64 + x) as usize] = 1.0;
            }
        }
    }
    Kernel::from_weights(size, weights, KernelMeta::of_kind(KernelKind::Defocus, diameter_px as f64))
}
