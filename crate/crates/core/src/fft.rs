//! Two-dimensional FFT helpers over row-major buffers.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// In-place 2-D DFT of a `width x height` row-major buffer. The inverse
/// transform is unnormalized, as in rustfft.
pub(crate) fn fft2(data: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    row.process(data);
    let mut column = vec![Complex::default(); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

/// Signed frequency (cycles/px) of DFT bin `k` out of `n`.
pub(crate) fn bin_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}
