//! Input-output performance curves: detection AP as a function of
//! estimated noise and blur.

mod ap;
mod build;
mod curve;
mod detector;

pub use ap::{ap_from_ranked, average_precision, DetBox};
pub use build::{build_iopc, patch_estimates, BuildConfig, CorruptionGrid, Frame, GridPoint};
pub use curve::{Cell, Iopc, IopcMeta};
pub use detector::{
    detection_quality, parse_jsonl, synthetic_detections, to_jsonl, DetRecord, Detector, FrameContext,
    RecordedDetections, SyntheticDetector,
};
