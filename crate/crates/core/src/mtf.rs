//! Modulation transfer function samples and kernel spectra.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::blur::Kernel;
use crate::error::{Error, Result};

/// The fixed sampling grid, in lines/px, shared by every MTF in the system.
pub const FREQUENCIES: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6];

/// Zero-pad length for kernel spectra. A multiple of 20, so every grid
/// frequency lands exactly on a DFT bin; bin spacing is 1/320 lines/px.
pub const PAD_LEN: usize = 320;

/// Image direction of an MTF measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    H,
    V,
}

/// Eight MTF values per direction on [`FREQUENCIES`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtfSamples {
    pub frequencies: [f64; 8],
    pub h: [f64; 8],
    pub v: [f64; 8],
}

impl MtfSamples {
    pub fn new(h: [f64; 8], v: [f64; 8]) -> Self {
        Self {
            frequencies: FREQUENCIES,
            h,
            v,
        }
    }

    /// Perfect system: MTF 1 everywhere.
    pub fn ones() -> Self {
        Self::new([1.0; 8], [1.0; 8])
    }

    pub fn direction(&self, dir: Direction) -> &[f64; 8] {
        match dir {
            Direction::H => &self.h,
            Direction::V => &self.v,
        }
    }

    pub fn same_grid(&self, other: &MtfSamples) -> bool {
        self.frequencies == other.frequencies
    }

    pub(crate) fn check_grid(&self, other: &MtfSamples) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Elementwise product (convolution theorem for cascaded blurs).
    pub fn product(&self, other: &MtfSamples) -> Result<MtfSamples> {
        self.check_grid(other)?;
        let mut out = self.clone();
        for i in 0..8 {
            out.h[i] *= other.h[i];
            out.v[i] *= other.v[i];
        }
        Ok(out)
    }

    /// Clamp every value to `[0, 1]`, returning how many values moved.
    pub fn clamp_unit(&mut self) -> usize {
        let mut n = 0;
        for v in self.h.iter_mut().chain(self.v.iter_mut()) {
            let c = v.clamp(0.0, 1.0);
            if c != *v {
                n += 1;
                *v = c;
            }
        }
        n
    }

    /// Value at an arbitrary frequency in one direction, linearly
    /// interpolated between grid samples. Below the first sample the curve
    /// is anchored at MTF(0) = 1; beyond the last it is held constant.
    pub fn at(&self, f: f64, dir: Direction) -> f64 {
        let vals = self.direction(dir);
        let freqs = &self.frequencies;
        if f <= freqs[0] {
            let t = (f / freqs[0]).max(0.0);
            return 1.0 + t * (vals[0] - 1.0);
        }
        for i in 1..8 {
            if f <= freqs[i] {
                let t = (f - freqs[i - 1]) / (freqs[i] - freqs[i - 1]);
                return vals[i - 1] + t * (vals[i] - vals[i - 1]);
            }
        }
        vals[7]
    }

    /// Mean of the horizontal and vertical values at `f`; the scalar blur
    /// coordinate used by performance curves.
    pub fn mean_at(&self, f: f64) -> f64 {
        0.5 * (self.at(f, Direction::H) + self.at(f, Direction::V))
    }

    /// Scalar blur coordinate at `f` under `reading`.
    pub fn read(&self, f: f64, reading: MtfReading) -> f64 {
        match reading {
            MtfReading::Mean => self.mean_at(f),
            MtfReading::Worst => self.at(f, Direction::H).min(self.at(f, Direction::V)),
        }
    }

    /// Swap H and V.
    pub fn transposed(&self) -> MtfSamples {
        Self {
            frequencies: self.frequencies,
            h: self.v,
            v: self.h,
        }
    }
}

/// How an H/V sample pair is reduced to one number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MtfReading {
    /// Mean of both directions.
    #[default]
    Mean,
    /// The more blurred direction; for axis-aligned motion this is the
    /// direction of motion.
    Worst,
}

/// Normalized |OTF| along the two frequency axes of a kernel, on a
/// [`PAD_LEN`]-point grid.
#[derive(Clone, Debug)]
pub struct KernelSpectrum {
    h_axis: Vec<f64>,
    v_axis: Vec<f64>,
}

impl KernelSpectrum {
    /// 2-D DFT of the kernel zero-padded to `PAD_LEN` x `PAD_LEN`.
    pub fn of(kernel: &Kernel) -> Self {
        let n = PAD_LEN.max(kernel.size());
        let size = kernel.size();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let mut grid = vec![Complex::new(0.0, 0.0); n * n];
        for y in 0..size {
            for x in 0..size {
                grid[y * n + x].re = kernel.weight(x, y);
            }
        }
        // rows
        for row in grid.chunks_exact_mut(n).take(size) {
            fft.process(row);
        }
        // columns
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = grid[y * n + x];
            }
            fft.process(&mut col);
            for y in 0..n {
                grid[y * n + x] = col[y];
            }
        }
        let dc = grid[0].norm();
        let h_axis = (0..n).map(|k| grid[k].norm() / dc).collect();
        let v_axis = (0..n).map(|k| grid[k * n].norm() / dc).collect();
        Self { h_axis, v_axis }
    }

    /// |OTF| at frequency `f` (lines/px), linearly interpolated between bins.
    pub fn sample(&self, f: f64, dir: Direction) -> f64 {
        let axis = match dir {
            Direction::H => &self.h_axis,
            Direction::V => &self.v_axis,
        };
        let n = axis.len();
        let pos = (f * n as f64).rem_euclid(n as f64);
        let i0 = pos.floor() as usize % n;
        let t = pos - pos.floor();
        if t == 0.0 {
            axis[i0]
        } else {
            axis[i0] + t * (axis[(i0 + 1) % n] - axis[i0])
        }
    }

    pub fn samples(&self) -> MtfSamples {
        MtfSamples::new(
            FREQUENCIES.map(|f| self.sample(f, Direction::H)),
            FREQUENCIES.map(|f| self.sample(f, Direction::V)),
        )
    }
}

/// Ground-truth MTF samples of a kernel.
pub fn kernel_mtf(kernel: &Kernel) -> MtfSamples {
    KernelSpectrum::of(kernel).samples()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_frequencies_hit_bins() {
        for f in FREQUENCIES {
            let p = f * PAD_LEN as f64;
            assert!((p - p.round()).abs() < 1e-9, "{f}");
        }
    }

    #[test]
    fn identity_is_flat() {
        let m = kernel_mtf(&Kernel::identity(31));
        for i in 0..8 {
            assert!((m.h[i] - 1.0).abs() < 1e-12);
            assert!((m.v[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_hits_grid_and_anchor() {
        let m = MtfSamples::new([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2], [1.0; 8]);
        assert_eq!(m.at(0.1, Direction::H), 0.8);
        assert!((m.at(0.0, Direction::H) - 1.0).abs() < 1e-15);
        assert!((m.at(0.25, Direction::H) - 0.55).abs() < 1e-12);
        assert!((m.mean_at(0.1) - 0.9).abs() < 1e-12);
        assert_eq!(m.at(0.9, Direction::H), 0.2);
    }

    #[test]
    fn grid_mismatch_detected() {
        let a = MtfSamples::ones();
        let mut b = MtfSamples::ones();
        b.frequencies[3] = 0.25;
        assert!(matches!(a.product(&b), Err(Error::GridMismatch)));
    }
}
