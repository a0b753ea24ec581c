use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no valid pixels for the requested instance")]
    EmptyCloud,
    #[error("point at z = {z:.6} m is behind the camera")]
    BehindCamera { z: f64 },
    #[error("mesh has a degenerate (zero-diagonal) bounding box")]
    DegenerateMesh,
    #[error("value {value} out of range: {what}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("region of interest contains no mask pixels")]
    EmptyRoi,
    #[error("rotated NOCS value leaves the unit cube by {excess:.3e}")]
    GeometryInconsistency { excess: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("no supporting plane found")]
    NoPlaneFound,
    #[error("missing ground truth for image ids: {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Short stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::EmptyCloud => "EmptyCloud",
            Error::BehindCamera { .. } => "BehindCamera",
            Error::DegenerateMesh => "DegenerateMesh",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::DegenerateConfiguration(_) => "DegenerateConfiguration",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::FitFailed(_) => "FitFailed",
            Error::EmptyRoi => "EmptyRoi",
            Error::GeometryInconsistency { .. } => "GeometryInconsistency",
            Error::NotApplicable(_) => "NotApplicable",
            Error::NoPlaneFound => "NoPlaneFound",
            Error::MissingGroundTruth(_) => "MissingGroundTruth",
            Error::Parse { .. } => "ParseError",
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => "NotFound",
            Error::Io(_) => "IoError",
            Error::Image(_) => "ImageError",
            Error::Json(_) => "ParseError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
