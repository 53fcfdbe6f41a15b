//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by estimation, optimization, and scene I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input geometry does not carry enough information (collinear
    /// cloud, single ring, too few points, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An estimation call received an empty point cloud.
    #[error("empty point cloud")]
    EmptyCloud,

    /// The rotation sits at the axis-angle chart singularity (angle pi).
    #[error("rotation at chart singularity (trace(R) = -1)")]
    ChartSingularity,

    /// A point landed behind the camera plane during projection.
    #[error("point projects behind the camera")]
    BehindCamera,

    /// Two edge lines are too close to parallel to intersect reliably.
    #[error("near-parallel edge lines (angle {angle_deg:.4} deg)")]
    NearParallelLines { angle_deg: f64 },

    /// The projected target polygons never overlap the image corners.
    #[error("no overlap between projected targets and image corners at the initial pose or any probe")]
    NoOverlap,

    /// Generated or configured geometry falls outside the camera frustum.
    #[error("camera frustum violation: {0}")]
    FrustumViolation(String),

    /// A referenced input file does not exist.
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    /// An input file exists but could not be parsed.
    #[error("malformed input {path}: {detail}")]
    MalformedInput { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
