//! Blur synthesis: point spread functions and their application.
//!
//! Blur is modelled as convolution of the clean signal with a normalized,
//! non-negative kernel. Two families are provided: uniform defocus disks
//! parameterized by their circle-of-confusion diameter, and motion kernels
//! rasterized from a (possibly curved) path with per-segment intensities.

mod convolve;
mod kernel;
mod motion;

pub use convolve::convolve;
pub use kernel::{coc_diameter, defocus_kernel, defocus_kernel_sized, Kernel, KernelKind, KernelMeta, DEFAULT_KERNEL_SIZE};
pub use motion::{
    linear_motion_kernel, motion_kernel, motion_kernel_sized, nonlinear_motion_kernel, raster_arc_length, MotionPath,
};

/// Blur sizes of the synthesis grid, in pixels.
pub const SIZE_GRID: [usize; 5] = [3, 7, 11, 15, 21];
