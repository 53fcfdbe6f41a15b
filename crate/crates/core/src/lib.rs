//! Extrinsic calibration of a LiDAR-camera pair from planar square targets.
//!
//! The crate estimates target vertices in the LiDAR frame two ways — a
//! volume fit of the whole cloud against the target's known geometry, and
//! an edge-line baseline — then solves for the LiDAR-to-camera rigid
//! transform by reprojection (PnP) or polygon-IoU optimization. A scene
//! simulator with ground truth and a round-robin validation harness close
//! the loop for quantitative evaluation.

pub mod baseline;
pub mod camera;
pub mod error;
pub mod extrinsic;
pub mod geometry;
pub mod gl1;
pub mod optim;
pub mod polygon;
pub mod scene;
pub mod simulator;
pub mod target;
pub mod validation;

pub use error::{Error, Result};
