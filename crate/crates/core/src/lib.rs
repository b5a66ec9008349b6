//! Simulation, estimation and control of camera image quality.
//!
//! The crate covers the whole loop of a camera condition monitor:
//!
//! * [`blur`] and [`noise`] synthesize physically ordered corruptions
//!   ([`pipeline`] chains them and records ground truth),
//! * [`estimate`] recovers noise level and MTF blindly from image patches,
//! * [`metrics`] and [`division`] score and post-process those estimates,
//! * [`iopc`] turns corrupted datasets and a detector into performance curves,
//! * [`control`] picks the exposure-time / ISO-gain trade-off that maximizes
//!   predicted detection performance.

pub mod blur;
pub mod control;

pub mod division;
pub mod error;
pub mod estimate;
pub mod experiments;
mod fft;

pub mod image;
pub mod iopc;
pub mod metrics;
pub mod mtf;
pub mod noise;
pub mod pipeline;
pub mod scene;
pub mod seed;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use mtf::{kernel_mtf, MtfSamples, FREQUENCIES};
