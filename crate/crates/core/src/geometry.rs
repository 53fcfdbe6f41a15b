//! Core 3D types: points, LiDAR returns, rigid-body transforms, and the
//! axis-angle pose chart used by the optimizers.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point in meters. Frame (LiDAR or target) is context-dependent.
pub type Point3 = nalgebra::Point3<f64>;

/// Entry-wise tolerance for rotation orthonormality and group-axiom checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// A single LiDAR return with its beam (ring) index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Point3,
    pub ring: u32,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64, ring: u32) -> Self {
        Self {
            position: Point3::new(x, y, z),
            ring,
        }
    }
}

/// Coordinate frame a point cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Lidar,
    Target,
}

/// An ordered collection of LiDAR returns tagged with its frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Point3> {
        self.points.iter().map(|p| &p.position)
    }

    /// Number of distinct rings present in the cloud.
    pub fn ring_count(&self) -> usize {
        let mut rings: Vec<u32> = self.points.iter().map(|p| p.ring).collect();
        rings.sort_unstable();
        rings.dedup();
        rings.len()
    }

    pub fn centroid(&self) -> Result<Point3> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let sum = self
            .positions()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Ok(Point3::from(sum / self.points.len() as f64))
    }

    /// Returns a copy with every point mapped through `t`, retagged to `frame`.
    pub fn transformed(&self, t: &RigidTransform, frame: Frame) -> PointCloud {
        let points = self
            .points
            .iter()
            .map(|p| LidarPoint {
                position: t.apply(&p.position),
                ring: p.ring,
            })
            .collect();
        PointCloud::new(points, frame)
    }

    /// Concatenates several scans of the same frame into one cloud.
    pub fn concat(clouds: &[PointCloud]) -> Result<PointCloud> {
        let first = clouds
            .first()
            .ok_or_else(|| Error::InvalidArgument("no clouds to concatenate".into()))?;
        let frame = first.frame;
        if clouds.iter().any(|c| c.frame != frame) {
            return Err(Error::InvalidArgument(
                "cannot concatenate clouds from different frames".into(),
            ));
        }
        let points = clouds.iter().flat_map(|c| c.points.iter().copied()).collect();
        Ok(PointCloud::new(points, frame))
    }
}

/// An SE(3) element: orthonormal rotation (det +1) plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Rotation3::identity(), Vector3::new(x, y, z))
    }

    /// Builds a transform from a raw matrix, validating orthonormality.
    pub fn from_matrix(m: &Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = m.transpose() * m;
        let max_dev = (gram - Matrix3::identity()).abs().max();
        if max_dev > ROTATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix is not orthonormal (max deviation {max_dev:.3e})"
            )));
        }
        if (m.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidArgument(
                "matrix determinant is not +1".into(),
            ));
        }
        Ok(Self::new(Rotation3::from_matrix_unchecked(*m), translation))
    }

    /// Builds a transform from an approximate basis, repairing it to the
    /// nearest rotation via polar decomposition.
    pub fn from_basis(m: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(nearest_rotation(m), translation)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    /// Applies the transform: returns `R p + T`.
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Rotates a free vector (no translation).
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Returns the inverse `(R^T, -R^T T)`.
    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.inverse();
        Self::new(rot_inv, -(rot_inv * self.translation))
    }

    /// Composition `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Converts to the axis-angle chart. Fails at the chart singularity
    /// (rotation angle pi, i.e. trace(R) = -1).
    pub fn to_chart(&self) -> Result<PoseChart> {
        let trace = self.rotation.matrix().trace();
        if (trace + 1.0).abs() <= 1e-12 {
            return Err(Error::ChartSingularity);
        }
        let axis = self.rotation.scaled_axis();
        Ok(PoseChart {
            rx: axis.x,
            ry: axis.y,
            rz: axis.z,
            tx: self.translation.x,
            ty: self.translation.y,
            tz: self.translation.z,
        })
    }

    /// Relative rotation angle to another transform, in radians.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        let rel = self.rotation.inverse() * other.rotation;
        let half_trace = (rel.matrix().trace() - 1.0) / 2.0;
        half_trace.clamp(-1.0, 1.0).acos()
    }

    /// Euclidean distance between the two translations, in meters.
    pub fn translation_distance_to(&self, other: &Self) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Projects an arbitrary 3x3 matrix to the nearest rotation (polar
/// decomposition via SVD, with the reflection case folded back to det +1).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd of 3x3 always yields u");
    let v_t = svd.v_t.expect("svd of 3x3 always yields v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut flip = Matrix3::identity();
        flip[(2, 2)] = -1.0;
        r = u * flip * v_t;
    }
    Rotation3::from_matrix_unchecked(r)
}

/// Minimal 6-parameter pose: axis-angle rotation vector plus translation.
///
/// Valid (injective) for rotation vectors of norm below pi. Units are
/// radians and meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseChart {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl PoseChart {
    pub fn zero() -> Self {
        Self::from_array([0.0; 6])
    }

    pub fn new(rx: f64, ry: f64, rz: f64, tx: f64, ty: f64, tz: f64) -> Self {
        Self {
            rx,
            ry,
            rz,
            tx,
            ty,
            tz,
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.rx, self.ry, self.rz, self.tx, self.ty, self.tz]
    }

    pub fn to_transform(self) -> RigidTransform {
        let rotation = Rotation3::from_scaled_axis(Vector3::new(self.rx, self.ry, self.rz));
        RigidTransform::new(rotation, Vector3::new(self.tx, self.ty, self.tz))
    }
}
