use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelKind, KernelMeta, DEFAULT_KERNEL_SIZE};
use crate::error::{Error, Result};
use crate::seed;

/// Samples per pixel of arc length during rasterization.
const SAMPLES_PER_PX: f64 = 64.0;
const NONLINEAR_SEGMENTS: usize = 48;
const MAX_REDRAWS: u64 = 64;

/// Ordered waypoints (kernel coordinates relative to the centre, y down)
/// with one intensity weight per segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPath {
    pub waypoints: Vec<(f64, f64)>,
    pub segment_weights: Vec<f64>,
    pub linear: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MotionPath {
    /// Straight unit-length segment through the centre at `angle_deg`
    /// (counter-clockwise from +x).
    pub fn linear(angle_deg: f64) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        Self {
            waypoints: vec![(-0.5 * c, 0.5 * s), (0.5 * c, -0.5 * s)],
            segment_weights: vec![1.0],
            linear: true,
            seed: None,
        }
    }

    /// Random smooth curve of unit arc length.
    ///
    /// Heading follows an AR(1) curvature process and per-segment intensities
    /// vary smoothly (slower motion deposits more light).
    pub fn random_smooth(seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let mut heading = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range").sample(&mut rng);
        let mut curvature = 0.0;
        let mut log_w = 0.0;
        let step = 1.0 / NONLINEAR_SEGMENTS as f64;
        let mut p = (0.0, 0.0);
        let mut waypoints = vec![p];
        let mut segment_weights = Vec::with_capacity(NONLINEAR_SEGMENTS);
        for _ in 0..NONLINEAR_SEGMENTS {
            curvature = 0.9 * curvature + 0.06 * unit.sample(&mut rng);
            heading += curvature;
            log_w = 0.85 * log_w + 0.12 * unit.sample(&mut rng);
            p = (p.0 + step * heading.cos(), p.1 - step * heading.sin());
            waypoints.push(p);
            segment_weights.push(log_w.exp());
        }
        let mut path = Self {
            waypoints,
            segment_weights,
            linear: false,
            seed: Some(seed),
        };
        path.recenter();
        path
    }

    /// Continuous arc length of the polyline.
    pub fn arc_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .sum()
    }

    /// Direction from first to last waypoint, in degrees.
    pub fn orientation_deg(&self) -> f64 {
        let a = self.waypoints[0];
        let b = *self.waypoints.last().expect("non-empty path");
        let deg = (-(b.1 - a.1)).atan2(b.0 - a.0).to_degrees();
        deg.rem_euclid(180.0)
    }

    fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.waypoints.iter_mut().for_each(|p| {
            p.0 *= factor;
            p.1 *= factor;
        });
        out
    }

    fn recenter(&mut self) {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &self.waypoints {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        self.waypoints.iter_mut().for_each(|p| {
            p.0 -= cx;
            p.1 -= cy;
        });
    }

    fn check(&self) -> Result<()> {
        if self.waypoints.len() < 2
            || self.segment_weights.len() + 1 != self.waypoints.len()
            || self.segment_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.arc_length() <= 0.0
        {
            return Err(Error::DegeneratePath);
        }
        Ok(())
    }

    /// Arc-length samples in path order: `(x, y, weight, major_axis_is_x)`.
    fn samples(&self) -> impl Iterator<Item = (f64, f64, f64, bool)> + '_ {
        self.waypoints
            .windows(2)
            .zip(&self.segment_weights)
            .flat_map(|(w, &sw)| {
                let (a, b) = (w[0], w[1]);
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len = dx.hypot(dy);
                let n = ((len * SAMPLES_PER_PX).ceil() as usize).max(1);
                let x_major = dx.abs() >= dy.abs();
                (0..n).map(move |k| {
                    let t = (k as f64 + 0.5) / n as f64;
                    (a.0 + t * dx, a.1 + t * dy, sw * len / n as f64, x_major)
                })
            })
    }
}

/// Length of the 8-connected pixel walk traced by the path: the sum of
/// centre-to-centre steps between consecutive distinct nearest pixels,
/// plus one pixel for the footprint of the walk's end pixels.
pub fn raster_arc_length(path: &MotionPath) -> f64 {
    let mut last: Option<(i64, i64)> = None;
    let mut total = 0.0;
    for (x, y, _, _) in path.samples() {
        let px = (x.round() as i64, y.round() as i64);
        if let Some(prev) = last {
            if prev != px {
                total += (((px.0 - prev.0).pow(2) + (px.1 - prev.1).pow(2)) as f64).sqrt();
            }
        }
        last = Some(px);
    }
    total + 1.0
}

/// Deposit path samples onto a canvas. Along the major axis each sample
/// goes to its nearest pixel; across it the weight is split linearly
/// between the two straddling pixels. Returns `None` if the path leaves
/// the canvas.
fn rasterize(path: &MotionPath, size: usize) -> Option<Vec<f64>> {
    let c = (size / 2) as f64;
    let mut w = vec![0.0; size * size];
    let inside = |i: f64| i >= 0.0 && i <= (size - 1) as f64;
    for (x, y, m, x_major) in path.samples() {
        let (x, y) = (x + c, y + c);
        let (major, minor) = if x_major { (x, y) } else { (y, x) };
        let maj = major.round();
        let lo = minor.floor();
        let frac = minor - lo;
        if !inside(maj) || !inside(lo) || (frac > 0.0 && !inside(lo + 1.0)) {
            return None;
        }
        let mut put = |mi: f64, share: f64| {
            if share == 0.0 {
                return;
            }
            let (px, py) = if x_major { (maj, mi) } else { (mi, maj) };
            w[py as usize * size + px as usize] += m * share;
        };
        put(lo, 1.0 - frac);
        put(lo + 1.0, frac);
    }
    Some(w)
}

/// Scale factors tried, in order, when matching the rasterized length.
fn scale_schedule() -> impl Iterator<Item = f64> {
    std::iter::once(1.0).chain((1..=50).flat_map(|i| {
        let d = i as f64 * 0.01;
        [1.0 - d, 1.0 + d]
    }))
}

/// Rasterize `path` as a motion kernel whose pixel-walk length is within
/// one pixel of `length_px` (one diagonal step where that is unreachable).
/// The path shape is rescaled as needed.
pub fn motion_kernel(path: &MotionPath, length_px: f64) -> Result<Kernel> {
    motion_kernel_sized(path, length_px, DEFAULT_KERNEL_SIZE)
}

pub fn motion_kernel_sized(path: &MotionPath, length_px: f64, size: usize) -> Result<Kernel> {
    path.check()?;
    if !(length_px > 0.0) {
        return Err(Error::InvalidParameter(format!("motion length {length_px} must be positive")));
    }
    let unit = path.scaled(1.0 / path.arc_length());
    // Symmetric diagonal walks only take even step counts, so a ±1 px match
    // is not always reachable; fall back to the closest one within a step.
    let mut best: Option<(f64, MotionPath, Vec<f64>)> = None;
    for s in scale_schedule() {
        let candidate = unit.scaled(s * length_px);
        let err = (raster_arc_length(&candidate) - length_px).abs();
        if err > std::f64::consts::SQRT_2 || best.as_ref().is_some_and(|b| b.0 <= err) {
            continue;
        }
        if let Some(w) = rasterize(&candidate, size) {
            best = Some((err, candidate, w));
            if err <= 1.0 {
                break;
            }
        }
    }
    let Some((_, candidate, w)) = best else {
        return Err(Error::InvalidParameter(format!(
            "no scaling of the path rasterizes to {length_px}px on a {size}px canvas"
        )));
    };
    let meta = KernelMeta {
        kind: if path.linear {
            KernelKind::LinearMotion
        } else {
            KernelKind::NonlinearMotion
        },
        extent_px: length_px,
        orientation_deg: Some(candidate.orientation_deg()),
        linear: Some(path.linear),
        seed: path.seed,
    };
    Kernel::from_weights(size, w, meta)
}

/// Straight motion of `length_px` pixels at `angle_deg`.
pub fn linear_motion_kernel(length_px: f64, angle_deg: f64) -> Result<Kernel> {
    motion_kernel(&MotionPath::linear(angle_deg), length_px)
}

/// Random smooth motion of approximately `length_px` pixels. Curves that
/// cannot be rasterized to the target length are rejected and redrawn from
/// the next sub-seed.
pub fn nonlinear_motion_kernel(length_px: f64, seed: u64) -> Result<Kernel> {
    let mut last_err = Error::DegeneratePath;
    for attempt in 0..MAX_REDRAWS {
        let path = MotionPath::random_smooth(seed::derive(seed, attempt));
        match motion_kernel(&path, length_px) {
            Ok(mut k) => {
                k.meta.seed = Some(seed);
                return Ok(k);
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}
