//! Square-target geometry and the interval hinge cost over its ideal volume.
//!
//! The target is modeled as a thin box in its own frame: the face normal is
//! the x-axis, the square's edges run along y and z. The familiar "diamond"
//! look comes from the target's pose in the LiDAR frame, not from this frame.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Frame, Point3, PointCloud};

/// Minimum ideal-volume half-thickness, in meters. Keeps the volume from
/// collapsing to measure zero on noise-free data.
pub const MIN_THICKNESS: f64 = 0.01;

/// Ideal square target: edge length and half-thickness of the fitted volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetModel {
    side: f64,
    thickness: f64,
}

impl TargetModel {
    pub fn new(side_d: f64, thickness_eps: f64) -> Result<Self> {
        if side_d <= 0.0 || !side_d.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "target side must be positive, got {side_d}"
            )));
        }
        if thickness_eps <= 0.0 || !thickness_eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "target thickness must be positive, got {thickness_eps}"
            )));
        }
        Ok(Self {
            side: side_d,
            thickness: thickness_eps,
        })
    }

    /// Edge length d of the square, in meters.
    pub fn side(&self) -> f64 {
        self.side
    }

    /// Half-thickness epsilon of the ideal volume, in meters.
    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn with_thickness(&self, thickness_eps: f64) -> Result<Self> {
        Self::new(self.side, thickness_eps)
    }

    /// The four corners of the x = 0 face, in target-frame coordinates.
    ///
    /// Fixed order: (0,-d/2,-d/2), (0,-d/2,+d/2), (0,+d/2,+d/2), (0,+d/2,-d/2).
    pub fn reference_vertices(&self) -> [Point3; 4] {
        let h = self.side / 2.0;
        [
            Point3::new(0.0, -h, -h),
            Point3::new(0.0, -h, h),
            Point3::new(0.0, h, h),
            Point3::new(0.0, h, -h),
        ]
    }

    /// True iff the point lies inside the closed ideal volume.
    pub fn contains(&self, p: &Point3) -> bool {
        let h = self.side / 2.0;
        p.x.abs() <= self.thickness && p.y.abs() <= h && p.z.abs() <= h
    }
}

/// Interval hinge: zero inside [-a, a], distance to the nearest endpoint
/// outside. Continuous and even in `lambda`.
pub fn hinge_cost(lambda: f64, a: f64) -> Result<f64> {
    if a < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "hinge half-width must be nonnegative, got {a}"
        )));
    }
    Ok(hinge(lambda, a))
}

#[inline]
pub(crate) fn hinge(lambda: f64, a: f64) -> f64 {
    debug_assert!(a >= 0.0);
    if lambda.abs() > a {
        (lambda - a).abs().min((lambda + a).abs())
    } else {
        0.0
    }
}

/// Per-point cost of a pulled-back cloud against the ideal volume: the sum
/// of the three per-axis hinges over all points. Zero exactly when every
/// point lies inside the closed box.
pub fn volume_cost(pulled_back: &PointCloud, model: &TargetModel) -> Result<f64> {
    if pulled_back.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if pulled_back.frame != Frame::Target {
        return Err(Error::InvalidArgument(
            "volume cost expects a cloud in the target frame".into(),
        ));
    }
    let h = model.side() / 2.0;
    let eps = model.thickness();
    Ok(pulled_back
        .positions()
        .map(|p| hinge(p.x, eps) + hinge(p.y, h) + hinge(p.z, h))
        .sum())
}

/// Default volume half-thickness for a raw cloud: the standard deviation of
/// point-to-plane distances against the cloud's own best-fit (PCA) plane,
/// floored at [`MIN_THICKNESS`].
pub fn default_thickness(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 3 {
        return Err(Error::DegenerateInput(
            "need at least 3 points to estimate thickness".into(),
        ));
    }
    let centroid = cloud.centroid()?;
    let mut centered = nalgebra::DMatrix::<f64>::zeros(cloud.len(), 3);
    for (i, p) in cloud.positions().enumerate() {
        let d = p - centroid;
        centered.set_row(i, &nalgebra::RowVector3::new(d.x, d.y, d.z).into());
    }
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let normal = Vector3::new(v_t[(2, 0)], v_t[(2, 1)], v_t[(2, 2)]);
    let mean_sq = cloud
        .positions()
        .map(|p| {
            let d = (p - centroid).dot(&normal);
            d * d
        })
        .sum::<f64>()
        / cloud.len() as f64;
    Ok(mean_sq.sqrt().max(MIN_THICKNESS))
}
