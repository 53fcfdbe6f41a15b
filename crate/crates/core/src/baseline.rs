//! Edge-line baseline for target-vertex estimation: centroid + SVD plane,
//! orthogonal projection, per-ring endpoint extraction, per-edge RANSAC
//! line fits, and vertex recovery by line intersection.
//!
//! Unlike the volume fit, the intersections are not constrained to the
//! target's geometry; the resulting estimate is flagged accordingly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2, Point2, RowVector3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::gl1::{order_vertices, VertexEstimate};

/// Options for the RANSAC line fits and vertex recovery.
#[derive(Debug, Clone)]
pub struct BaselineOptions {
    /// Inlier distance threshold, in meters.
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    /// Adjacent edge lines meeting below this angle are rejected.
    pub min_intersection_angle_deg: f64,
    pub seed: u64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            ransac_threshold: 0.01,
            ransac_iterations: 200,
            min_intersection_angle_deg: 1.0,
            seed: 0,
        }
    }
}

/// Best-fit plane of a cloud with an in-plane coordinate frame.
///
/// The first in-plane axis is horizontal (perpendicular to the world
/// z-axis), the second completes the frame and points roughly up.
#[derive(Debug, Clone)]
pub struct PlaneFrame {
    pub centroid: Point3,
    pub normal: Vector3<f64>,
    pub in_plane_axes: [Vector3<f64>; 2],
}

impl PlaneFrame {
    /// In-plane coordinates (horizontal, vertical) of a 3D point.
    pub fn to_plane(&self, p: &Point3) -> Point2<f64> {
        let d = p - self.centroid;
        Point2::new(d.dot(&self.in_plane_axes[0]), d.dot(&self.in_plane_axes[1]))
    }

    /// Lifts in-plane coordinates back to 3D.
    pub fn to_space(&self, p: &Point2<f64>) -> Point3 {
        self.centroid + self.in_plane_axes[0] * p.x + self.in_plane_axes[1] * p.y
    }
}

/// Centroid + SVD plane fit. The normal is the right singular vector of
/// the centered cloud with the smallest singular value, signed to point
/// toward the sensor origin.
pub fn fit_plane(cloud: &PointCloud) -> Result<PlaneFrame> {
    if cloud.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs at least 3 points, got {}",
            cloud.len()
        )));
    }
    let centroid = cloud.centroid()?;
    let mut centered = DMatrix::<f64>::zeros(cloud.len(), 3);
    for (i, p) in cloud.positions().enumerate() {
        let d = p - centroid;
        centered.set_row(i, &RowVector3::new(d.x, d.y, d.z).into());
    }
    let svd = centered.svd(false, true);
    let s = &svd.singular_values;
    if s[1] <= 1e-8 * s[0].max(1e-12) {
        return Err(Error::DegenerateInput(
            "plane fit is rank deficient (collinear points)".into(),
        ));
    }
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut normal = Vector3::new(v_t[(2, 0)], v_t[(2, 1)], v_t[(2, 2)]).normalize();
    if normal.dot(&(-centroid.coords)) < 0.0 {
        normal = -normal;
    }

    let world_up = Vector3::z();
    let horizontal = world_up.cross(&normal);
    if horizontal.norm() < 1e-6 {
        return Err(Error::DegenerateInput(
            "target plane is horizontal; edge orientation is undefined".into(),
        ));
    }
    let horizontal = horizontal.normalize();
    let mut vertical = normal.cross(&horizontal).normalize();
    if vertical.dot(&world_up) < 0.0 {
        vertical = -vertical;
    }
    Ok(PlaneFrame {
        centroid,
        normal,
        in_plane_axes: [horizontal, vertical],
    })
}

/// Per-edge collections of in-plane ring endpoints.
#[derive(Debug, Clone, Default)]
pub struct EdgePointSet {
    pub top_left: Vec<Point2<f64>>,
    pub top_right: Vec<Point2<f64>>,
    pub bottom_left: Vec<Point2<f64>>,
    pub bottom_right: Vec<Point2<f64>>,
}

impl EdgePointSet {
    pub fn total(&self) -> usize {
        self.top_left.len() + self.top_right.len() + self.bottom_left.len() + self.bottom_right.len()
    }

    fn merge(&mut self, other: EdgePointSet) {
        self.top_left.extend(other.top_left);
        self.top_right.extend(other.top_right);
        self.bottom_left.extend(other.bottom_left);
        self.bottom_right.extend(other.bottom_right);
    }
}

/// Selects each ring's horizontal extremes in one scan and assigns them to
/// the four edges: rings above the widest ring feed the top edges, rings
/// below feed the bottom edges, left endpoints feed left edges and right
/// endpoints right edges. The widest ring itself splits deterministically:
/// its left endpoint goes to bottom-left, its right endpoint to top-right.
pub fn extract_edge_points(cloud: &PointCloud, frame: &PlaneFrame) -> Result<EdgePointSet> {
    let mut by_ring: BTreeMap<u32, Vec<Point2<f64>>> = BTreeMap::new();
    for p in &cloud.points {
        by_ring
            .entry(p.ring)
            .or_default()
            .push(frame.to_plane(&p.position));
    }
    // Single-point rings carry no width information.
    let rings: Vec<(u32, Point2<f64>, Point2<f64>)> = by_ring
        .into_iter()
        .filter(|(_, pts)| pts.len() >= 2)
        .map(|(ring, pts)| {
            let left = pts
                .iter()
                .copied()
                .min_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap())
                .unwrap();
            let right = pts
                .iter()
                .copied()
                .max_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap())
                .unwrap();
            (ring, left, right)
        })
        .collect();
    if rings.len() < 2 {
        return Err(Error::DegenerateInput(
            "need at least 2 rings on the target to identify vertices".into(),
        ));
    }

    let widest_idx = rings
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            let wa = a.2.x - a.1.x;
            let wb = b.2.x - b.1.x;
            wa.partial_cmp(&wb).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let widest_v = (rings[widest_idx].1.y + rings[widest_idx].2.y) / 2.0;

    let mut set = EdgePointSet::default();
    for (i, (_, left, right)) in rings.iter().enumerate() {
        if i == widest_idx {
            set.bottom_left.push(*left);
            set.top_right.push(*right);
            continue;
        }
        let ring_v = (left.y + right.y) / 2.0;
        if ring_v > widest_v {
            set.top_left.push(*left);
            set.top_right.push(*right);
        } else {
            set.bottom_left.push(*left);
            set.bottom_right.push(*right);
        }
    }
    Ok(set)
}

/// A 2D line in point-direction form.
#[derive(Debug, Clone, Copy)]
pub struct Line2D {
    pub point: Point2<f64>,
    pub direction: Unit<Vector2<f64>>,
}

impl Line2D {
    pub fn distance_to(&self, p: &Point2<f64>) -> f64 {
        let d = p - self.point;
        (d.x * self.direction.y - d.y * self.direction.x).abs()
    }
}

/// Total-least-squares line through a point set (principal direction of the
/// centered covariance).
fn tls_line(points: &[Point2<f64>]) -> Result<Line2D> {
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector2::zeros(), |acc, p| acc + p.coords)
        / n;
    let mut cov = Matrix2::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let (max_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .unwrap();
    let dir = eig.eigenvectors.column(max_idx).into_owned();
    if dir.norm() < 1e-12 {
        return Err(Error::DegenerateInput(
            "line fit direction is undefined (coincident points)".into(),
        ));
    }
    Ok(Line2D {
        point: Point2::from(centroid),
        direction: Unit::new_normalize(dir),
    })
}

/// RANSAC line fit: repeated two-point hypotheses, consensus by inlier
/// count, final total-least-squares fit over the best inlier set.
pub fn ransac_line(
    points: &[Point2<f64>],
    opts: &BaselineOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Line2D> {
    if points.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "line fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.len() == 2 {
        return tls_line(points);
    }

    let mut best_inliers: Vec<usize> = Vec::new();
    for _ in 0..opts.ransac_iterations {
        let i = rng.random_range(0..points.len());
        let mut j = rng.random_range(0..points.len() - 1);
        if j >= i {
            j += 1;
        }
        let d = points[j] - points[i];
        if d.norm() < 1e-12 {
            continue;
        }
        let line = Line2D {
            point: points[i],
            direction: Unit::new_normalize(d),
        };
        let inliers: Vec<usize> = (0..points.len())
            .filter(|&k| line.distance_to(&points[k]) <= opts.ransac_threshold)
            .collect();
        if inliers.len() > best_inliers.len() {
            best_inliers = inliers;
        }
    }
    if best_inliers.len() < 2 {
        return Err(Error::DegenerateInput(
            "no line consensus found".into(),
        ));
    }
    let inlier_points: Vec<Point2<f64>> = best_inliers.iter().map(|&i| points[i]).collect();
    tls_line(&inlier_points)
}

fn intersect(a: &Line2D, b: &Line2D, min_angle_deg: f64) -> Result<Point2<f64>> {
    let cross = a.direction.x * b.direction.y - a.direction.y * b.direction.x;
    let angle_deg = cross.abs().asin().to_degrees();
    if angle_deg < min_angle_deg {
        return Err(Error::NearParallelLines { angle_deg });
    }
    // Solve a.point + t * a.dir = b.point + s * b.dir.
    let rhs = b.point - a.point;
    let t = (rhs.x * b.direction.y - rhs.y * b.direction.x) / cross;
    Ok(a.point + a.direction.into_inner() * t)
}

/// Estimates the four target vertices from a group of scans: plane fit on
/// the concatenated scans, per-scan per-ring edge extraction, per-edge
/// RANSAC lines, intersections lifted back to 3D.
pub fn baseline_vertices(scans: &[PointCloud], opts: &BaselineOptions) -> Result<VertexEstimate> {
    let combined = PointCloud::concat(scans)?;
    let frame = fit_plane(&combined)?;

    let mut edges = EdgePointSet::default();
    for scan in scans {
        edges.merge(extract_edge_points(scan, &frame)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let top_left = ransac_line(&edges.top_left, opts, &mut rng)?;
    let top_right = ransac_line(&edges.top_right, opts, &mut rng)?;
    let bottom_left = ransac_line(&edges.bottom_left, opts, &mut rng)?;
    let bottom_right = ransac_line(&edges.bottom_right, opts, &mut rng)?;

    let min_angle = opts.min_intersection_angle_deg;
    let top = intersect(&top_left, &top_right, min_angle)?;
    let right = intersect(&top_right, &bottom_right, min_angle)?;
    let bottom = intersect(&bottom_left, &bottom_right, min_angle)?;
    let left = intersect(&top_left, &bottom_left, min_angle)?;

    let vertices = order_vertices([
        frame.to_space(&top),
        frame.to_space(&right),
        frame.to_space(&bottom),
        frame.to_space(&left),
    ]);

    let lines = [top_left, top_right, bottom_left, bottom_right];
    let pools = [
        &edges.top_left,
        &edges.top_right,
        &edges.bottom_left,
        &edges.bottom_right,
    ];
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for (line, pool) in lines.iter().zip(pools) {
        for p in pool.iter() {
            let d = line.distance_to(p);
            if d <= opts.ransac_threshold {
                sq_sum += d * d;
                count += 1;
            }
        }
    }
    let residual = if count > 0 {
        (sq_sum / count as f64).sqrt()
    } else {
        0.0
    };

    Ok(VertexEstimate {
        vertices,
        fit_transform: None,
        residual_cost: residual,
        iterations: opts.ransac_iterations,
        converged: true,
        geometry_imposed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, LidarPoint};
    use approx::assert_relative_eq;

    /// Diamond sampled by horizontal rings on the plane x = cx.
    fn diamond_scan(cx: f64, cy: f64, cz: f64, side: f64, rings: usize, dy: f64) -> PointCloud {
        let half_diag = side / std::f64::consts::SQRT_2;
        let mut points = Vec::new();
        for r in 0..rings {
            let frac = (r as f64 + 0.5) / rings as f64;
            let z = cz - half_diag + 2.0 * half_diag * frac;
            let width = half_diag - (z - cz).abs();
            if width <= 0.0 {
                continue;
            }
            let mut y = cy - width;
            while y <= cy + width {
                points.push(LidarPoint::new(cx, y, z, r as u32));
                y += dy;
            }
        }
        PointCloud::new(points, Frame::Lidar)
    }

    #[test]
    fn plane_fit_exact_plane() {
        let cloud = diamond_scan(5.0, 0.0, 0.0, 1.0, 10, 0.01);
        let frame = fit_plane(&cloud).unwrap();
        assert_relative_eq!(frame.normal.x.abs(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(frame.centroid.x, 5.0, epsilon = 1e-9);
        // Sign convention: toward the sensor origin.
        assert!(frame.normal.dot(&-frame.centroid.coords) > 0.0);
        // Orthonormal frame.
        assert_relative_eq!(frame.normal.norm(), 1.0, epsilon = 1e-12);
        for axis in &frame.in_plane_axes {
            assert_relative_eq!(axis.norm(), 1.0, epsilon = 1e-12);
            assert!(axis.dot(&frame.normal).abs() < 1e-9);
        }
    }

    #[test]
    fn plane_fit_noise_perturbation() {
        // Symmetric +/- 1 mm off-plane noise tilts the normal < 0.5 deg.
        let mut cloud = diamond_scan(4.0, 0.2, -0.1, 0.8, 12, 0.01);
        for (i, p) in cloud.points.iter_mut().enumerate() {
            let delta = if i % 2 == 0 { 0.001 } else { -0.001 };
            p.position.x += delta;
        }
        let frame = fit_plane(&cloud).unwrap();
        let tilt = frame.normal.cross(&Vector3::x()).norm().asin().to_degrees();
        assert!(tilt < 0.5, "normal tilted {tilt} deg");
    }

    #[test]
    fn plane_fit_rejects_degenerate() {
        let two = PointCloud::new(
            vec![
                LidarPoint::new(1.0, 0.0, 0.0, 0),
                LidarPoint::new(2.0, 0.0, 0.0, 1),
            ],
            Frame::Lidar,
        );
        assert!(fit_plane(&two).is_err());

        let collinear = PointCloud::new(
            (0..10)
                .map(|i| LidarPoint::new(1.0, i as f64 * 0.1, 0.0, i))
                .collect(),
            Frame::Lidar,
        );
        assert!(fit_plane(&collinear).is_err());
    }

    #[test]
    fn edge_points_count_and_split() {
        let cloud = diamond_scan(3.0, 0.0, 0.0, 0.8, 8, 0.005);
        let frame = fit_plane(&cloud).unwrap();
        let edges = extract_edge_points(&cloud, &frame).unwrap();
        assert_eq!(edges.total(), 16);
        // The widest ring contributes one point each to bottom-left and
        // top-right, so those two lists carry 9 of the 16 points; the
        // remaining 7 rings split by height.
        assert!(edges.top_left.len() >= 3);
        assert!(edges.bottom_right.len() >= 3);
        assert_eq!(edges.top_right.len() + edges.bottom_left.len(), 9);
        assert_eq!(edges.top_left.len() + edges.bottom_right.len(), 7);
    }

    #[test]
    fn single_ring_is_error() {
        let cloud = diamond_scan(3.0, 0.0, 0.0, 0.8, 1, 0.005);
        // A single ring is collinear, so build the plane frame directly.
        let frame = PlaneFrame {
            centroid: Point3::new(3.0, 0.0, 0.0),
            normal: Vector3::new(-1.0, 0.0, 0.0),
            in_plane_axes: [Vector3::new(0.0, -1.0, 0.0), Vector3::new(0.0, 0.0, 1.0)],
        };
        assert!(extract_edge_points(&cloud, &frame).is_err());
    }

    #[test]
    fn ransac_two_points() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let line = ransac_line(&pts, &BaselineOptions::default(), &mut rng).unwrap();
        assert!(line.distance_to(&pts[0]) < 1e-12);
        assert!(line.distance_to(&pts[1]) < 1e-12);
    }

    #[test]
    fn ransac_ignores_far_outlier() {
        let opts = BaselineOptions::default();
        let mut pts: Vec<Point2<f64>> = (0..10)
            .map(|i| Point2::new(i as f64 * 0.05, 0.0))
            .collect();
        pts.push(Point2::new(0.2, 10.0 * opts.ransac_threshold));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let line = ransac_line(&pts, &opts, &mut rng).unwrap();
        for p in &pts[..10] {
            assert!(line.distance_to(p) < 1e-9);
        }
        assert!(line.distance_to(&pts[10]) > opts.ransac_threshold);
    }

    #[test]
    fn ransac_slope_regression() {
        // y = 2x + 1 with uniform noise within half the inlier threshold.
        let opts = BaselineOptions::default();
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point2<f64>> = (0..40)
                .map(|i| {
                    let x = i as f64 * 0.02;
                    let noise = rng.random_range(-0.5..0.5) * opts.ransac_threshold;
                    Point2::new(x, 2.0 * x + 1.0 + noise)
                })
                .collect();
            let line = ransac_line(&pts, &opts, &mut rng).unwrap();
            let slope = line.direction.y / line.direction.x;
            assert!(
                (slope - 2.0).abs() / 2.0 < 0.05,
                "seed {seed}: slope {slope}"
            );
        }
    }

    #[test]
    fn exact_diamond_recovers_corners() {
        let (cx, cy, cz, side) = (3.0, 0.1, -0.05, 0.805);
        let scans: Vec<PointCloud> = (0..5)
            .map(|_| diamond_scan(cx, cy, cz, side, 16, 0.004))
            .collect();
        let est = baseline_vertices(&scans, &BaselineOptions::default()).unwrap();
        assert!(!est.geometry_imposed);
        assert!(est.fit_transform.is_none());

        let half_diag = side / std::f64::consts::SQRT_2;
        let truth = [
            Point3::new(cx, cy, cz + half_diag),
            Point3::new(cx, cy - half_diag, cz),
            Point3::new(cx, cy, cz - half_diag),
            Point3::new(cx, cy + half_diag, cz),
        ];
        for t in &truth {
            let nearest = est
                .vertices
                .iter()
                .map(|v| (v - t).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 0.01, "corner {t:?} missed by {nearest}");
        }
    }

    #[test]
    fn vertices_coplanar_with_fitted_plane() {
        let scans: Vec<PointCloud> = (0..3)
            .map(|_| diamond_scan(2.0, -0.3, 0.2, 0.5, 12, 0.004))
            .collect();
        let combined = PointCloud::concat(&scans).unwrap();
        let frame = fit_plane(&combined).unwrap();
        let est = baseline_vertices(&scans, &BaselineOptions::default()).unwrap();
        for v in &est.vertices {
            let off = (v - frame.centroid).dot(&frame.normal).abs();
            assert!(off < 1e-9, "vertex off-plane by {off}");
        }
    }

    #[test]
    fn near_parallel_edges_error() {
        // A needle-thin diamond: adjacent edge lines meet below the
        // 1-degree intersection floor.
        let (w, h) = (0.004, 0.6);
        let rings = 10;
        let mut points = Vec::new();
        for r in 0..rings {
            let z = -h + (r as f64 + 0.5) * (2.0 * h / rings as f64);
            let width = w * (1.0 - z.abs() / h);
            if width <= 0.0 {
                continue;
            }
            points.push(LidarPoint::new(3.0, -width, z, r));
            points.push(LidarPoint::new(3.0, 0.0, z, r));
            points.push(LidarPoint::new(3.0, width, z, r));
        }
        let cloud = PointCloud::new(points, Frame::Lidar);
        let result = baseline_vertices(std::slice::from_ref(&cloud), &BaselineOptions::default());
        assert!(matches!(result, Err(Error::NearParallelLines { .. })));
    }
}
