use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image has zero size")]
    EmptyImage,
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("lens cannot focus: focused distance {s1} must exceed focal length {focal}")]
    CannotFocus { s1: f64, focal: f64 },
    #[error("degenerate motion path")]
    DegeneratePath,
    #[error("kernel ({kernel}px) larger than image ({width}x{height})")]
    KernelTooLarge {
        kernel: usize,
        width: usize,
        height: usize,
    },
    #[error("noise field is identically zero but target sigma is {0}")]
    ZeroField(f64),
    #[error("negative intensity {0} cannot drive a Poisson process")]
    NegativeIntensity(f64),
    #[error("invalid corruption ordering: {0}")]
    Ordering(String),
    #[error("patch must be {expected}x{expected}, got {width}x{height}")]
    PatchSize {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error("insufficient texture for spectral blur estimation")]
    InsufficientTexture,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("frequency grids differ")]
    GridMismatch,
    #[error("no recoverable band: every frequency failed the division guard")]
    NoRecoverableBand,
    #[error("query ({sigma}, {mtf}) outside performance-curve hull")]
    OutOfHull { sigma: f64, mtf: f64 },
    #[error("performance-curve cell ({0}, {1}) is empty")]
    EmptyCell(usize, usize),
    #[error("calibration table is not monotone")]
    NonMonotoneCalibration,
    #[error("no trade-off factor keeps the query inside the performance curve")]
    NoFeasibleAlpha,
    #[error("unknown estimator id `{0}`")]
    UnknownEstimator(String),
    #[error("no ground-truth boxes in dataset")]
    NoGroundTruth,
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
