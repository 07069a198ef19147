use std::path::PathBuf;

use crate::volume::Axis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("volume has a single distinct value, min-max normalization is undefined")]
    ConstantVolume,

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: [usize; 3], found: [usize; 3] },

    #[error("grid of {found} values does not match dims {dims:?}")]
    GridSize { dims: [usize; 3], found: usize },

    #[error("{axis:?} index {index} out of range (len {len})")]
    IndexOutOfRange { axis: Axis, index: usize, len: usize },

    #[error("invalid density window [{lo}, {hi}]")]
    InvalidWindow { lo: f64, hi: f64 },

    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid brush stroke: {0}")]
    InvalidStroke(String),

    #[error("rays are parallel")]
    ParallelRays,

    #[error("quaternion is not unit length (norm {0})")]
    NonUnitQuaternion(f64),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("interpolation needs at least two key slices")]
    NeedTwoKeys,

    #[error("key slice indices must be strictly increasing")]
    UnsortedKeys,

    #[error("session has no stroke")]
    NoStroke,

    #[error("session has no end event")]
    NoSessionEnd,

    #[error("session has no anchor event")]
    NoAnchor,

    #[error("timestamps must be strictly increasing")]
    NonIncreasingTime,

    #[error("corrupt file {path}: field `{field}`: {reason}")]
    CorruptFile { path: PathBuf, field: String, reason: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed event at line {line}: {reason}")]
    MalformedEvent { line: usize, reason: String },

    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("png encoding failed: {0}")]
    Png(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn corrupt(
        path: impl Into<PathBuf>,
        field: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::CorruptFile { path: path.into(), field: field.into(), reason: reason.into() }
    }

    /// Name of the offending field, when the error is attributable to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::CorruptFile { field, .. } => Some(field),
            Error::IndexOutOfRange { .. } => Some("index"),
            Error::InvalidWindow { .. } => Some("window"),
            Error::InvalidTransferFunction(_) => Some("transfer_function"),
            Error::InvalidCamera(_) => Some("cam"),
            Error::InvalidStroke(_) => Some("stroke"),
            Error::NonUnitQuaternion(_) | Error::InvalidPose(_) => Some("pose"),
            Error::NeedTwoKeys | Error::UnsortedKeys => Some("keys"),
            Error::DimensionMismatch { .. } | Error::GridSize { .. } => Some("dims"),
            Error::MalformedEvent { .. } => Some("event"),
            Error::NoStroke | Error::NoSessionEnd | Error::NoAnchor => Some("session"),
            Error::NonIncreasingTime => Some("t"),
            _ => None,
        }
    }
}
