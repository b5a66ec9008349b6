//! Grayscale image representation, patch tiling and file I/O.
//!
//! Intensities are kept as `f64` digital numbers (DN) on a nominal 0–255
//! scale. Nothing is clamped or rounded until [`clamp_quantize`] or one of
//! the writers is called, so chained corruptions never pick up re-quantization
//! bias.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Patch edge length used by the blur estimators.
pub const BLUR_PATCH: usize = 192;
/// Patch edge length used by the noise estimators.
pub const NOISE_PATCH: usize = 128;

/// BT.601 luma weights (R, G, B).
pub const BT601: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major grayscale image in DN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::Dimensions(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single value.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Elementwise map into a new image of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum with an equally shaped field.
    pub fn add_field(&self, field: &[f64]) -> Result<GrayImage> {
        if field.len() != self.data.len() {
            return Err(Error::Dimensions(format!(
                "field of {} values added to {}x{} image",
                field.len(),
                self.width,
                self.height
            )));
        }
        Ok(GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(field).map(|(a, b)| a + b).collect(),
        })
    }

    /// Square sub-view; fails when it would leave the image.
    pub fn patch(&self, x: usize, y: usize, size: usize) -> Result<Patch<'_>> {
        if size == 0 || x + size > self.width || y + size > self.height {
            return Err(Error::Dimensions(format!(
                "patch {size}px at ({x},{y}) outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(Patch {
            parent: self,
            origin: (x, y),
            size,
        })
    }

    /// The whole image as a patch, if it is square.
    pub fn as_patch(&self) -> Result<Patch<'_>> {
        if self.width != self.height {
            return Err(Error::Dimensions(format!(
                "{}x{} image is not square",
                self.width, self.height
            )));
        }
        self.patch(0, 0, self.width)
    }
}

/// Read-only square view into a parent image.
#[derive(Clone, Copy, Debug)]
pub struct Patch<'a> {
    parent: &'a GrayImage,
    origin: (usize, usize),
    size: usize,
}

impl<'a> Patch<'a> {
    #[inline]
    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn parent(&self) -> &'a GrayImage {
        self.parent
    }

    /// Pixel at patch-local coordinates.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.parent.get(self.origin.0 + x, self.origin.1 + y)
    }

    pub fn row(&self, y: usize) -> &'a [f64] {
        let r = self.parent.row(self.origin.1 + y);
        &r[self.origin.0..self.origin.0 + self.size]
    }

    /// Copy out as an owned image.
    pub fn to_image(&self) -> GrayImage {
        let mut data = Vec::with_capacity(self.size * self.size);
        for y in 0..self.size {
            data.extend_from_slice(self.row(y));
        }
        GrayImage {
            width: self.size,
            height: self.size,
            data,
        }
    }

    /// Whether this patch intersects the axis-aligned rectangle `(x, y, w, h)`.
    pub fn overlaps(&self, rect: (f64, f64, f64, f64)) -> bool {
        let (px, py) = (self.origin.0 as f64, self.origin.1 as f64);
        let s = self.size as f64;
        px < rect.0 + rect.2 && rect.0 < px + s && py < rect.1 + rect.3 && rect.1 < py + s
    }
}

/// All maximal non-overflowing square tiles in raster order. Remainders at the
/// right and bottom borders are dropped, never padded.
pub fn tile_patches(img: &GrayImage, size: usize, stride: usize) -> Result<Vec<Patch<'_>>> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    if size == 0 || size > img.width.min(img.height) {
        return Err(Error::Dimensions(format!(
            "patch size {size} does not fit {}x{} image",
            img.width, img.height
        )));
    }
    let nx = (img.width - size) / stride + 1;
    let ny = (img.height - size) / stride + 1;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push(Patch {
                parent: img,
                origin: (i * stride, j * stride),
                size,
            });
        }
    }
    Ok(out)
}

/// Round half-to-even, then clamp to `[0, 255]`.
pub fn clamp_quantize(img: &GrayImage) -> GrayImage {
    img.map(quantize_value)
}

#[inline]
fn quantize_value(v: f64) -> f64 {
    v.round_ties_even().clamp(0.0, 255.0)
}

fn to_bytes(img: &GrayImage) -> Vec<u8> {
    img.data.iter().map(|&v| quantize_value(v) as u8).collect()
}

/// Load a PNG or PGM file. Color inputs are reduced to BT.601 luma.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gray(&bytes)
}

/// Decode PNG or PNM bytes (sniffed from the magic number).
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let format = match image::guess_format(bytes) {
        Ok(f @ (image::ImageFormat::Png | image::ImageFormat::Pnm)) => f,
        Ok(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        Err(_) => return Err(Error::UnsupportedFormat("unrecognised header".into())),
    };
    let dyn_img =
        image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode(e.to_string()))?;
    let (w, h) = (dyn_img.width() as usize, dyn_img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let luma = |r: f64, g: f64, b: f64| BT601[0] * r + BT601[1] * g + BT601[2] * b;
    use image::DynamicImage as D;
    let data: Vec<f64> = match &dyn_img {
        D::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| f64::from(v)).collect(),
        D::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        D::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0].into(), p.0[1].into(), p.0[2].into()))
            .collect(),
        D::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0].into(), p.0[1].into(), p.0[2].into()))
            .collect(),
        other => other
            .to_rgb16()
            .pixels()
            .map(|p| {
                let s = |v: u16| f64::from(v) / 257.0;
                luma(s(p.0[0]), s(p.0[1]), s(p.0[2]))
            })
            .collect(),
    };
    GrayImage::new(w, h, data)
}

/// Encode as binary PGM (P5, maxval 255) after quantization.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(to_bytes(img));
    out
}

/// Encode as 8-bit grayscale PNG after quantization.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let enc = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        enc,
        &to_bytes(img),
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out)
}

/// Write an image; the format follows the extension (`.png` or `.pgm`).
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(img)?,
        "pgm" => encode_pgm(img),
        other => return Err(Error::UnsupportedFormat(format!("extension `{other}`"))),
    };
    write_atomic(path, &bytes)
}

/// Write through a temporary sibling file and rename into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
