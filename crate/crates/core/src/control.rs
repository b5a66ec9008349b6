//! Exposure-time / ISO-gain trade-off control.
//!
//! Shortening the exposure by a factor α shortens motion blur by α and
//! dims the image by α; raising the ISO gain by α restores the intensity
//! and, under digital amplification, scales the noise sigma by α. The
//! controller searches α on a geometric grid for the highest AP predicted
//! by a performance curve.

use serde::{Deserialize, Serialize};

use crate::blur::linear_motion_kernel;
use crate::error::{Error, Result};
use crate::iopc::Iopc;
use crate::mtf::{kernel_mtf, MtfReading};

/// Frequency of the blur coordinate used for control. At 0.1 lines/px the
/// MTF of linear motion is not monotone in the extent over 0..21 px.
pub const CONTROL_FREQUENCY: f64 = 0.05;
/// Motion extents of the default calibration table.
pub const CALIBRATION_EXTENTS: [usize; 6] = [0, 3, 7, 11, 15, 21];
pub const ALPHA_MIN: f64 = 0.125;
pub const ALPHA_MAX: f64 = 8.0;
pub const ALPHA_STEPS: usize = 65;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    pub exposure_s: f64,
    pub iso: f64,
}

impl CameraState {
    pub fn new(exposure_s: f64, iso: f64) -> Result<Self> {
        if !(exposure_s > 0.0 && exposure_s.is_finite() && iso > 0.0 && iso.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "camera state ({exposure_s} s, iso {iso}) must be positive"
            )));
        }
        Ok(Self { exposure_s, iso })
    }

    /// Intensity proxy `t_exp * iso`.
    pub fn intensity(&self) -> f64 {
        self.exposure_s * self.iso
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraBounds {
    pub exposure_min: f64,
    pub exposure_max: f64,
    pub iso_min: f64,
    pub iso_max: f64,
}

impl Default for CameraBounds {
    fn default() -> Self {
        Self {
            exposure_min: 1e-4,
            exposure_max: 0.5,
            iso_min: 0.125,
            iso_max: 64.0,
        }
    }
}

impl CameraBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo > 0.0 && lo <= hi && hi.is_finite();
        if !ok(self.exposure_min, self.exposure_max) || !ok(self.iso_min, self.iso_max) {
            return Err(Error::InvalidParameter("camera bounds must satisfy 0 < min <= max".into()));
        }
        Ok(())
    }

    pub fn contains(&self, s: &CameraState) -> bool {
        (self.exposure_min..=self.exposure_max).contains(&s.exposure_s) && (self.iso_min..=self.iso_max).contains(&s.iso)
    }
}

/// Linear trade-off: blur extent proportional to exposure time, noise
/// sigma proportional to ISO gain. The predicted extent after a change is
/// known only to within a relative `extent_uncertainty`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffModel {
    pub extent_uncertainty: f64,
}

impl Default for TradeoffModel {
    fn default() -> Self {
        Self { extent_uncertainty: 0.1 }
    }
}

impl TradeoffModel {
    /// No uncertainty: the search is a plain argmax over the curve.
    pub fn exact() -> Self {
        Self { extent_uncertainty: 0.0 }
    }

    /// Predicted `(sigma, extent)` after dividing the exposure by `alpha`
    /// and multiplying the gain by `alpha`.
    pub fn predict(&self, sigma: f64, extent: f64, alpha: f64) -> (f64, f64) {
        (alpha * sigma, extent / alpha)
    }

    /// Range of extents the prediction may actually produce.
    pub fn extent_range(&self, extent: f64, alpha: f64) -> (f64, f64) {
        let d = extent / alpha;
        if alpha == 1.0 {
            (d, d)
        } else {
            (d * (1.0 - self.extent_uncertainty), d * (1.0 + self.extent_uncertainty))
        }
    }
}

/// Blur extent versus MTF for linear motion kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub frequency: f64,
    pub reading: MtfReading,
    /// Strictly increasing extents in pixels.
    pub extents: Vec<f64>,
    /// MTF of each extent's kernel, strictly decreasing.
    pub mtf: Vec<f64>,
}

impl CalibrationTable {
    pub fn new(frequency: f64, reading: MtfReading, extents: Vec<f64>, mtf: Vec<f64>) -> Result<Self> {
        if extents.len() < 2 || extents.len() != mtf.len() || !extents.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("calibration extents must be strictly increasing".into()));
        }
        if !mtf.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::NonMonotoneCalibration);
        }
        Ok(Self {
            frequency,
            reading,
            extents,
            mtf,
        })
    }

    /// Table from synthesized linear motion kernels at `angle_deg`.
    pub fn linear_motion(extents: &[usize], angle_deg: f64, frequency: f64, reading: MtfReading) -> Result<Self> {
        let mut mtf = Vec::with_capacity(extents.len());
        for &d in extents {
            mtf.push(if d == 0 {
                1.0
            } else {
                kernel_mtf(&linear_motion_kernel(d as f64, angle_deg)?).read(frequency, reading)
            });
        }
        Self::new(frequency, reading, extents.iter().map(|&d| d as f64).collect(), mtf)
    }

    /// Horizontal motion over [`CALIBRATION_EXTENTS`], read along the
    /// motion direction at [`CONTROL_FREQUENCY`].
    pub fn default_motion() -> Result<Self> {
        Self::linear_motion(&CALIBRATION_EXTENTS, 0.0, CONTROL_FREQUENCY, MtfReading::Worst)
    }

    /// Like [`default_motion`](Self::default_motion) but at every integer
    /// extent up to 21 px except 1 (a single tap, same MTF as no blur) and
    /// 20 (the MTF at 0.05 lines/px passes through zero).
    pub fn dense_motion() -> Result<Self> {
        let extents: Vec<usize> = (0..=21).filter(|&d| d != 1 && d != 20).collect();
        Self::linear_motion(&extents, 0.0, CONTROL_FREQUENCY, MtfReading::Worst)
    }

    pub fn max_extent(&self) -> f64 {
        self.extents[self.extents.len() - 1]
    }

    /// Blur extent for an MTF value, piecewise linear, clamped to the table.
    pub fn mtf_to_extent(&self, m: f64) -> f64 {
        let n = self.mtf.len();
        if m >= self.mtf[0] {
            return self.extents[0];
        }
        if m <= self.mtf[n - 1] {
            return self.extents[n - 1];
        }
        let i = self.mtf.iter().position(|&v| v < m).unwrap_or(n - 1);
        let t = (self.mtf[i - 1] - m) / (self.mtf[i - 1] - self.mtf[i]);
        self.extents[i - 1] + t * (self.extents[i] - self.extents[i - 1])
    }

    /// MTF for a blur extent, piecewise linear, clamped to the table.
    pub fn extent_to_mtf(&self, d: f64) -> f64 {
        let n = self.extents.len();
        if d <= self.extents[0] {
            return self.mtf[0];
        }
        if d >= self.extents[n - 1] {
            return self.mtf[n - 1];
        }
        let i = self.extents.iter().position(|&e| e > d).unwrap_or(n - 1);
        let t = (d - self.extents[i - 1]) / (self.extents[i] - self.extents[i - 1]);
        self.mtf[i - 1] + t * (self.mtf[i] - self.mtf[i - 1])
    }
}

pub fn mtf_to_blur_extent(m: f64, table: &CalibrationTable) -> f64 {
    table.mtf_to_extent(m)
}

/// `ALPHA_STEPS` geometric steps from `ALPHA_MIN` to `ALPHA_MAX`; the middle
/// one is exactly 1.
pub fn alpha_grid() -> Vec<f64> {
    let half = (ALPHA_STEPS / 2) as f64;
    let span = ALPHA_MAX.log2();
    (0..ALPHA_STEPS)
        .map(|k| (span * (k as f64 - half) / half).exp2())
        .collect()
}

/// Factor that brings the blur extent from `d_hat` to `d_target`.
pub fn alpha_for_target(d_hat: f64, d_target: f64) -> Result<f64> {
    if !(d_hat > 0.0 && d_target > 0.0) {
        return Err(Error::InvalidParameter("blur extents must be positive".into()));
    }
    Ok(d_hat / d_target)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionDirection {
    /// Shorter exposure, higher gain.
    BlurReduce,
    /// Longer exposure, lower gain.
    NoiseReduce,
}

/// Outcome of the α search. `alpha` is the grid factor in the
/// exposure-division sense; below 1 it lengthens the exposure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub alpha: f64,
    pub predicted_ap_before: f64,
    pub predicted_ap_after: f64,
    pub sigma_after: f64,
    pub mtf_after: f64,
}

impl Plan {
    /// Direction and factor (>= 1) to hand to [`apply_action`].
    pub fn action(&self) -> (ActionDirection, f64) {
        if self.alpha >= 1.0 {
            (ActionDirection::BlurReduce, self.alpha)
        } else {
            (ActionDirection::NoiseReduce, 1.0 / self.alpha)
        }
    }
}

/// Search `alphas` for the largest predicted AP. The prediction for a
/// factor is the lowest AP over the extent range of `model`, so a factor
/// that lands on a narrow ridge of the curve is not preferred over a
/// broad plateau. Candidates whose range leaves the curve or touches an
/// empty cell are skipped; ties go to the factor closest to 1 in log
/// scale, then to the smaller.
pub fn optimal_alpha(
    iopc: &Iopc,
    sigma_hat: f64,
    mtf_hat: f64,
    table: &CalibrationTable,
    model: &TradeoffModel,
    alphas: &[f64],
) -> Result<Plan> {
    if table.frequency != iopc.frequency || table.reading != iopc.reading {
        return Err(Error::InvalidParameter(
            "calibration table and performance curve use different MTF coordinates".into(),
        ));
    }
    if !(0.0..1.0).contains(&model.extent_uncertainty) {
        return Err(Error::InvalidParameter("extent uncertainty must lie in [0, 1)".into()));
    }
    let before = iopc.lookup(sigma_hat, mtf_hat)?;
    let d_hat = table.mtf_to_extent(mtf_hat);
    let mut order: Vec<f64> = alphas.iter().copied().filter(|a| *a > 0.0 && a.is_finite()).collect();
    order.sort_by(|a, b| a.ln().abs().total_cmp(&b.ln().abs()).then(a.total_cmp(b)));
    let mut best: Option<Plan> = None;
    for alpha in order {
        let (s, d) = model.predict(sigma_hat, d_hat, alpha);
        // with no measurable blur the MTF coordinate stays where it is
        let (m, ap) = if d_hat == 0.0 {
            match iopc.lookup(s, mtf_hat) {
                Ok(ap) => (mtf_hat, ap),
                Err(_) => continue,
            }
        } else {
            let (lo, hi) = model.extent_range(d_hat, alpha);
            // extents beyond the calibrated range are outside the curve
            if hi > table.max_extent() {
                continue;
            }
            match worst_over(iopc, s, table.extent_to_mtf(hi), table.extent_to_mtf(lo)) {
                Some(ap) => (table.extent_to_mtf(d), ap),
                None => continue,
            }
        };
        if best.map_or(true, |b| ap > b.predicted_ap_after) {
            best = Some(Plan {
                alpha,
                predicted_ap_before: before,
                predicted_ap_after: ap,
                sigma_after: s,
                mtf_after: m,
            });
        }
    }
    best.ok_or(Error::NoFeasibleAlpha)
}

/// Lowest AP at `sigma` for MTF in `[m_lo, m_hi]`. The curve is piecewise
/// linear along the MTF axis, so the minimum is at an end or a grid line.
fn worst_over(iopc: &Iopc, sigma: f64, m_lo: f64, m_hi: f64) -> Option<f64> {
    let inner = iopc.mtf_grid.iter().copied().filter(|g| *g > m_lo && *g < m_hi);
    let mut worst: Option<f64> = None;
    for m in [m_lo, m_hi].into_iter().chain(inner) {
        let ap = iopc.lookup(sigma, m).ok()?;
        worst = Some(worst.map_or(ap, |w: f64| w.min(ap)));
    }
    worst
}

/// Result of [`apply_action`]; `clipped` flags a factor reduced to stay
/// within the camera bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Applied {
    pub state: CameraState,
    pub alpha: f64,
    pub clipped: bool,
}

/// Trade exposure against gain by `alpha` (>= 1) in `direction`, keeping
/// `t_exp * iso` fixed. A factor that would leave `bounds` is reduced to
/// the largest admissible one.
pub fn apply_action(state: CameraState, alpha: f64, direction: ActionDirection, bounds: &CameraBounds) -> Result<Applied> {
    bounds.validate()?;
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("action factor {alpha} must be >= 1")));
    }
    let limit = match direction {
        ActionDirection::BlurReduce => (state.exposure_s / bounds.exposure_min).min(bounds.iso_max / state.iso),
        ActionDirection::NoiseReduce => (bounds.exposure_max / state.exposure_s).min(state.iso / bounds.iso_min),
    };
    let (a, clipped) = if alpha > limit { (limit.max(1.0), true) } else { (alpha, false) };
    let next = match direction {
        ActionDirection::BlurReduce => CameraState {
            exposure_s: state.exposure_s / a,
            iso: state.iso * a,
        },
        ActionDirection::NoiseReduce => CameraState {
            exposure_s: state.exposure_s * a,
            iso: state.iso / a,
        },
    };
    Ok(Applied {
        state: next,
        alpha: a,
        clipped,
    })
}

/// JSON record of one control decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub alpha: f64,
    pub direction: ActionDirection,
    pub new_exposure_s: f64,
    pub new_iso: f64,
    pub predicted_ap_before: f64,
    pub predicted_ap_after: f64,
    pub clipped: bool,
}

/// Plan and apply in one step under the default model.
pub fn decide(
    iopc: &Iopc,
    sigma_hat: f64,
    mtf_hat: f64,
    table: &CalibrationTable,
    state: CameraState,
    bounds: &CameraBounds,
) -> Result<ActionRecord> {
    decide_with(iopc, sigma_hat, mtf_hat, table, &TradeoffModel::default(), state, bounds)
}

pub fn decide_with(
    iopc: &Iopc,
    sigma_hat: f64,
    mtf_hat: f64,
    table: &CalibrationTable,
    model: &TradeoffModel,
    state: CameraState,
    bounds: &CameraBounds,
) -> Result<ActionRecord> {
    let plan = optimal_alpha(iopc, sigma_hat, mtf_hat, table, model, &alpha_grid())?;
    let (direction, alpha) = plan.action();
    let applied = apply_action(state, alpha, direction, bounds)?;
    Ok(ActionRecord {
        alpha: applied.alpha,
        direction,
        new_exposure_s: applied.state.exposure_s,
        new_iso: applied.state.iso,
        predicted_ap_before: plan.predicted_ap_before,
        predicted_ap_after: plan.predicted_ap_after,
        clipped: applied.clipped,
    })
}
