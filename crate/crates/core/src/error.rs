use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage used to tag errors coming out of the multi-stage
/// registration pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Undistort,
    Projection,
    Matching,
    Fundamental,
    Pnp,
    Refinement,
    Chain,
    Ransac3d,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Undistort => "undistort",
            Stage::Projection => "projection",
            Stage::Matching => "matching",
            Stage::Fundamental => "fundamental",
            Stage::Pnp => "PnP",
            Stage::Refinement => "refinement",
            Stage::Chain => "chain",
            Stage::Ransac3d => "3D RANSAC",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame mismatch: expected `{expected}`, found `{found}`")]
    FrameMismatch { expected: String, found: String },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid virtual depth {0} (must be > 0)")]
    InvalidDepth(f64),

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("malformed XML: {0}")]
    MalformedXml(String),

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("value out of range for `{0}`")]
    OutOfRange(String),

    #[error("unknown lens type {0}")]
    UnknownLensType(u8),

    #[error("descriptor dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty descriptor set")]
    EmptySet,

    #[error("insufficient matches: {found} found, {required} required")]
    InsufficientMatches { found: usize, required: usize },

    #[error("insufficient correspondences: {found} found, {required} required")]
    InsufficientCorrespondences { found: usize, required: usize },

    #[error("no consensus: best model has {inliers} inliers, {required} required")]
    NoConsensus { inliers: usize, required: usize },

    #[error("malformed CSV: {0}")]
    MalformedCsv(String),

    #[error("unknown tracked object `{0}`")]
    UnknownObject(String),

    #[error("index {index} out of range (stream length {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("marker plate points are collinear")]
    CollinearMarkers,

    #[error("marker plate validation failed: P1 measured at ({}, {}, {}) in the local frame, {deviation:.3} mm from the template", measured[0], measured[1], measured[2])]
    ValidationFailed { measured: [f64; 3], deviation: f64 },

    #[error("trajectory length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("malformed feature sidecar: {0}")]
    MalformedSidecar(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn frames(expected: &impl fmt::Display, found: &impl fmt::Display) -> Error {
        Error::FrameMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Stage tag of a stage-wrapped error.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// Innermost error, with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for input, configuration and I/O problems, as opposed to
    /// algorithmic failures such as missing consensus.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            Error::Io { .. }
                | Error::Json(_)
                | Error::Toml(_)
                | Error::Config(_)
                | Error::MalformedXml(_)
                | Error::MalformedCsv(_)
                | Error::MalformedSidecar(_)
                | Error::MissingField(_)
                | Error::OutOfRange(_)
                | Error::InvalidParameter(_)
                | Error::UnknownObject(_)
        )
    }
}
