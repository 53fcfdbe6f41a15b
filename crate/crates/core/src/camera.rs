//! Pinhole camera model and the LiDAR-to-image projection map.
//!
//! Distortion-free: recorded images must be undistorted before their corner
//! coordinates enter the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Depth below which a transformed point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

/// Residual magnitude, in pixels, substituted for behind-camera points
/// inside the optimizers so line searches survive transient bad poses.
pub const BEHIND_CAMERA_PENALTY: f64 = 1e6;

/// Pinhole intrinsics. JSON form uses keys `fx`, `fy`, `s`, `cx`, `cy`
/// (all in pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    #[serde(rename = "s", default)]
    pub skew: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, skew: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            skew,
            cx,
            cy,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }
}

/// Image-plane point in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance_to(&self, other: &PixelPoint) -> f64 {
        ((self.u - other.u).powi(2) + (self.v - other.v).powi(2)).sqrt()
    }
}

/// Projects a LiDAR-frame point into the image: applies the extrinsics,
/// multiplies by the intrinsic matrix, and dehomogenizes.
pub fn project(p: &Point3, intr: &Intrinsics, extr: &RigidTransform) -> Result<PixelPoint> {
    let cam = extr.apply(p);
    let w = cam.z;
    if w <= MIN_DEPTH {
        return Err(Error::BehindCamera);
    }
    let u_h = intr.fx * cam.x + intr.skew * cam.y + intr.cx * cam.z;
    let v_h = intr.fy * cam.y + intr.cy * cam.z;
    Ok(PixelPoint::new(u_h / w, v_h / w))
}
