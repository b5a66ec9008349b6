use rayon::prelude::*;

use super::kernel::Kernel;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Mirror index into `[0, n)` without repeating the edge sample
/// (`-1 -> 1`, `n -> n-2`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Linear convolution `img ⊛ k` with reflected borders. Output has the
/// input's shape; each output pixel sums the kernel taps in a fixed
/// row-major order, so results do not depend on the thread count.
pub fn convolve(img: &GrayImage, k: &Kernel) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if k.size() > w || k.size() > h {
        return Err(Error::KernelTooLarge {
            kernel: k.size(),
            width: w,
            height: h,
        });
    }
    let r = k.center();
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    // padded copy: padded(px, py) = img(reflect(px - r), reflect(py - r))
    let xs: Vec<usize> = (0..pw).map(|px| reflect(px as isize - r as isize, w)).collect();
    let mut padded = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        let row = img.row(reflect(py as isize - r as isize, h));
        padded.extend(xs.iter().map(|&x| row[x]));
    }
    // out(x, y) = Σ k(dx, dy) · in(x - dx, y - dy)
    let taps: Vec<(usize, f64)> = k
        .taps()
        .into_iter()
        .map(|(dx, dy, wgt)| {
            let ox = (r as isize - dx) as usize;
            let oy = (r as isize - dy) as usize;
            (oy * pw + ox, wgt)
        })
        .collect();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let base = y * pw;
        for (x, o) in row.iter_mut().enumerate() {
            let origin = base + x;
            let mut acc = 0.0;
            for &(off, wgt) in &taps {
                acc += wgt * padded[origin + off];
            }
            *o = acc;
        }
    });
    GrayImage::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blur::{defocus_kernel, KernelKind, KernelMeta};

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(4, 5), 4);
        assert_eq!(reflect(-7, 5), 1);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn identity_and_dc() {
        let img = GrayImage::from_fn(40, 33, |x, y| ((x * 7 + y * 13) % 17) as f64).unwrap();
        assert_eq!(convolve(&img, &Kernel::identity(31)).unwrap(), img);
        let flat = GrayImage::constant(40, 40, 91.5).unwrap();
        let out = convolve(&flat, &defocus_kernel(21).unwrap()).unwrap();
        assert!(out.data().iter().all(|v| (v - 91.5).abs() < 1e-9));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let w: Vec<f64> = (0..25).map(|i| (i % 7) as f64 + 1.0).collect();
        let k = Kernel::from_weights(5, w, KernelMeta::of_kind(KernelKind::Custom, 5.0)).unwrap();
        let mut img = GrayImage::constant(21, 21, 0.0).unwrap().into_data();
        img[10 * 21 + 10] = 1.0;
        let img = GrayImage::new(21, 21, img).unwrap();
        let out = convolve(&img, &k).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                assert!((out.get(8 + x, 8 + y) - k.weight(x, y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kernel_too_large() {
        let img = GrayImage::constant(20, 40, 0.0).unwrap();
        assert!(matches!(
            convolve(&img, &defocus_kernel(3).unwrap()),
            Err(Error::KernelTooLarge { .. })
        ));
    }
}
