//! Synthetic scene generation with ground truth: posed diamond targets,
//! ring-sampled LiDAR returns with angular quantization, per-ring
//! systematic range bias, and image corners projected through known
//! extrinsics.
//!
//! Range is the only corrupted quantity: de-biased and de-noised, every
//! generated point lies exactly on its beam's ray.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{self, Intrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::extrinsic::canonical_sort;
use crate::geometry::{Frame, LidarPoint, Point3, PointCloud, RigidTransform};
use crate::scene::{Scene, SceneTruth, TargetObservation};
use crate::target::TargetModel;

/// Beam layout and range-corruption model of the simulated sensor.
#[derive(Debug, Clone)]
pub struct LidarSpec {
    /// Per-beam elevation angles, in degrees. Ring index = position.
    pub elevations_deg: Vec<f64>,
    /// Horizontal angular step between consecutive returns, in degrees.
    pub azimuth_resolution_deg: f64,
    /// Per-beam constant range offset, in meters.
    pub ring_range_bias: Vec<f64>,
    /// Standard deviation of the zero-mean per-point range noise, in meters.
    pub range_noise_std: f64,
}

impl LidarSpec {
    pub fn new(
        elevations_deg: Vec<f64>,
        azimuth_resolution_deg: f64,
        ring_range_bias: Vec<f64>,
        range_noise_std: f64,
    ) -> Result<Self> {
        if elevations_deg.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least 2 beams".into(),
            ));
        }
        if azimuth_resolution_deg <= 0.0 {
            return Err(Error::InvalidArgument(
                "azimuth resolution must be positive".into(),
            ));
        }
        if ring_range_bias.len() != elevations_deg.len() {
            return Err(Error::InvalidArgument(format!(
                "bias table has {} entries for {} beams",
                ring_range_bias.len(),
                elevations_deg.len()
            )));
        }
        Ok(Self {
            elevations_deg,
            azimuth_resolution_deg,
            ring_range_bias,
            range_noise_std,
        })
    }

    pub fn beam_count(&self) -> usize {
        self.elevations_deg.len()
    }

    /// Noise-free spec with the default 32-beam layout.
    pub fn thirty_two_beam(azimuth_resolution_deg: f64) -> Self {
        let elevations = default_elevations();
        let beams = elevations.len();
        Self {
            elevations_deg: elevations,
            azimuth_resolution_deg,
            ring_range_bias: vec![0.0; beams],
            range_noise_std: 0.0,
        }
    }
}

/// Default 32-beam elevation table: a dense band at 0.33-degree spacing
/// around the horizon, sparse 1.36-degree bands above and below.
pub fn default_elevations() -> Vec<f64> {
    let mut angles = Vec::with_capacity(32);
    for k in (1..=6).rev() {
        angles.push(-3.3 - 1.36 * k as f64);
    }
    for k in 0..=20 {
        angles.push(-3.3 + 0.33 * k as f64);
    }
    for k in 1..=5 {
        angles.push(3.3 + 1.36 * k as f64);
    }
    debug_assert_eq!(angles.len(), 32);
    angles
}

/// Builds a target pose: the target-frame x-axis maps to `normal`, the
/// in-plane axes are rotated by `inplane_deg` about it (45 degrees gives
/// the diamond orientation), and the origin maps to `center`.
pub fn target_pose(center: Point3, normal: Vector3<f64>, inplane_deg: f64) -> RigidTransform {
    let n = normal.normalize();
    let mut z_base = Vector3::z() - n * Vector3::z().dot(&n);
    if z_base.norm() < 1e-9 {
        z_base = Vector3::y() - n * Vector3::y().dot(&n);
    }
    let z_base = z_base.normalize();
    let y_base = z_base.cross(&n);
    let spin = Rotation3::from_axis_angle(&Unit::new_normalize(n), inplane_deg.to_radians());
    let y_axis = spin * y_base;
    let z_axis = spin * z_base;
    let rot = Matrix3::from_columns(&[n, y_axis, z_axis]);
    RigidTransform::from_basis(&rot, center.coords)
}

/// Samples the LiDAR returns of one posed target. Beams sweep quantized
/// azimuths; a return is emitted where the beam ray crosses the target
/// plane inside the square, at a range corrupted by the ring's bias plus
/// Gaussian noise.
pub fn sample_target(
    spec: &LidarSpec,
    model: &TargetModel,
    pose: &RigidTransform,
    rng: &mut ChaCha8Rng,
) -> Result<PointCloud> {
    let normal = pose.apply_vector(&Vector3::x());
    let center = pose.translation();
    let pullback = pose.inverse();
    let half = model.side() / 2.0;
    let az_step = spec.azimuth_resolution_deg.to_radians();

    // Azimuth window covering the posed square, padded by one step.
    let vertices = model.reference_vertices().map(|v| pose.apply(&v));
    let azimuths: Vec<f64> = vertices.iter().map(|v| v.y.atan2(v.x)).collect();
    let az_min = azimuths.iter().cloned().fold(f64::INFINITY, f64::min) - az_step;
    let az_max = azimuths.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + az_step;

    let noise = Normal::new(0.0, spec.range_noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(format!("bad noise stdev: {e}")))?;

    let mut points = Vec::new();
    for (ring, elevation_deg) in spec.elevations_deg.iter().enumerate() {
        let elevation = elevation_deg.to_radians();
        let (sin_e, cos_e) = (elevation.sin(), elevation.cos());
        let k_min = (az_min / az_step).ceil() as i64;
        let k_max = (az_max / az_step).floor() as i64;
        for k in k_min..=k_max {
            let azimuth = k as f64 * az_step;
            let dir = Vector3::new(cos_e * azimuth.cos(), cos_e * azimuth.sin(), sin_e);
            let denom = normal.dot(&dir);
            if denom.abs() < 1e-12 {
                continue;
            }
            let range = normal.dot(&center) / denom;
            if range <= 0.0 {
                continue;
            }
            let hit = Point3::from(dir * range);
            let local = pullback.apply(&hit);
            if local.y.abs() > half || local.z.abs() > half {
                continue;
            }
            let corrupted = range
                + spec.ring_range_bias[ring]
                + if spec.range_noise_std > 0.0 {
                    noise.sample(rng)
                } else {
                    0.0
                };
            points.push(LidarPoint {
                position: Point3::from(dir * corrupted),
                ring: ring as u32,
            });
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud::new(points, Frame::Lidar))
}

/// Full simulation config. All fields have defaults, so `{}` is a valid
/// config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub num_scenes: usize,
    pub scans_per_target: usize,
    pub elevations_deg: Vec<f64>,
    pub azimuth_resolution_deg: f64,
    /// Per-ring constant bias is drawn uniformly from +/- this magnitude.
    pub ring_bias_magnitude: f64,
    pub range_noise_std: f64,
    /// Standard deviation of the pixel noise added to image corners.
    pub corner_noise_std: f64,
    pub large_target_side: f64,
    pub small_target_side: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub intrinsics: Intrinsics,
    /// Rotation offset of the default initial guess from the truth, degrees.
    pub init_rotation_offset_deg: f64,
    /// Translation offset of the default initial guess from the truth, meters.
    pub init_translation_offset: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_scenes: 7,
            scans_per_target: 5,
            elevations_deg: default_elevations(),
            azimuth_resolution_deg: 0.1,
            ring_bias_magnitude: 0.03,
            range_noise_std: 0.01,
            corner_noise_std: 0.0,
            large_target_side: 0.805,
            small_target_side: 0.158,
            image_width: 640.0,
            image_height: 480.0,
            intrinsics: Intrinsics {
                fx: 600.0,
                fy: 600.0,
                skew: 0.0,
                cx: 320.0,
                cy: 240.0,
            },
            init_rotation_offset_deg: 5.0,
            init_translation_offset: 0.1,
        }
    }
}

impl SimConfig {
    /// Zero bias, zero range noise, zero corner noise.
    pub fn noise_free(mut self) -> Self {
        self.ring_bias_magnitude = 0.0;
        self.range_noise_std = 0.0;
        self.corner_noise_std = 0.0;
        self
    }
}

/// The fixed rig: camera roughly 20 cm below and 10 cm ahead of the LiDAR,
/// pitch approximately zero, camera axes x-right / y-down / z-forward.
pub fn rig_extrinsics() -> RigidTransform {
    let rot = Rotation3::from_matrix_unchecked(Matrix3::new(
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0,
    ));
    let camera_in_lidar = Vector3::new(0.10, 0.0, -0.20);
    RigidTransform::new(rot, -(rot * camera_in_lidar))
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// The default initial guess shipped with a simulated dataset: the truth
/// perturbed by the configured rotation/translation offsets.
pub fn perturbed_init(cfg: &SimConfig, truth: &RigidTransform) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let axis = random_unit_vector(&mut rng);
    let angle = cfg.init_rotation_offset_deg.to_radians();
    let offset_rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    let offset_trans = random_unit_vector(&mut rng) * cfg.init_translation_offset;
    RigidTransform::new(offset_rot, offset_trans).compose(truth)
}

fn scene_target_poses(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<(TargetModel, RigidTransform)> {
    let large = TargetModel::new(cfg.large_target_side, 0.02).expect("valid side");
    let small = TargetModel::new(cfg.small_target_side, 0.02).expect("valid side");

    // Large target far, small target near, on opposite sides of the axis.
    let side_sign = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };

    let large_dist = rng.random_range(2.4..3.4);
    let large_az = side_sign * rng.random_range(2.0..8.0_f64).to_radians();
    let large_z = rng.random_range(-0.10..0.15);
    let large_center = Point3::new(
        large_dist * large_az.cos(),
        large_dist * large_az.sin(),
        large_z,
    );

    let small_dist = rng.random_range(1.2..1.7);
    let small_az = -side_sign * rng.random_range(4.0..12.0_f64).to_radians();
    let small_z = rng.random_range(-0.10..0.10);
    let small_center = Point3::new(
        small_dist * small_az.cos(),
        small_dist * small_az.sin(),
        small_z,
    );

    let mut poses = Vec::with_capacity(2);
    for (model, center) in [(large, large_center), (small, small_center)] {
        let mut normal = -center.coords.normalize();
        normal += random_unit_vector(rng) * (rng.random_range(0.0..10.0_f64).to_radians());
        let inplane = 45.0 + rng.random_range(-8.0..8.0);
        poses.push((model, target_pose(center, normal, inplane)));
    }
    poses
}

/// Generates one scene: two posed diamond targets, the configured number
/// of scans each, and image corners projected through the true extrinsics.
pub fn make_scene(
    cfg: &SimConfig,
    spec: &LidarSpec,
    scene_index: usize,
    extrinsics: &RigidTransform,
) -> Result<(Scene, SceneTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1 + scene_index as u64);

    let poses = scene_target_poses(cfg, &mut rng);
    let corner_noise = Normal::new(0.0, cfg.corner_noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(format!("bad corner noise: {e}")))?;

    let mut targets = Vec::with_capacity(poses.len());
    let mut target_poses = Vec::with_capacity(poses.len());
    let mut target_vertices = Vec::with_capacity(poses.len());
    for (model, pose) in &poses {
        let vertices = model.reference_vertices().map(|v| pose.apply(&v));

        // Frustum check on the true vertices, with a small margin.
        let mut corners = [PixelPoint::new(0.0, 0.0); 4];
        for (slot, v) in corners.iter_mut().zip(&vertices) {
            let p = camera::project(v, &cfg.intrinsics, extrinsics).map_err(|_| {
                Error::FrustumViolation(format!(
                    "target vertex {v:?} is behind the camera in scene {scene_index}"
                ))
            })?;
            if p.u < 0.0 || p.u > cfg.image_width || p.v < 0.0 || p.v > cfg.image_height {
                return Err(Error::FrustumViolation(format!(
                    "target corner projects to ({:.1}, {:.1}), outside {}x{} in scene {}",
                    p.u, p.v, cfg.image_width, cfg.image_height, scene_index
                )));
            }
            *slot = p;
        }
        if cfg.corner_noise_std > 0.0 {
            for c in corners.iter_mut() {
                c.u += corner_noise.sample(&mut rng);
                c.v += corner_noise.sample(&mut rng);
            }
        }
        let corners = canonical_sort(&corners)?;

        let scans: Vec<PointCloud> = (0..cfg.scans_per_target)
            .map(|_| sample_target(spec, model, pose, &mut rng))
            .collect::<Result<_>>()?;

        targets.push(TargetObservation {
            model: *model,
            scans,
            image_corners: corners,
        });
        target_poses.push(*pose);
        target_vertices.push(vertices);
    }

    let truth = SceneTruth {
        extrinsics: *extrinsics,
        target_poses,
        target_vertices,
    };
    let scene = Scene {
        name: format!("scene_{:02}", scene_index + 1),
        targets,
        intrinsics: cfg.intrinsics,
        truth: Some(truth.clone()),
    };
    Ok((scene, truth))
}

/// Generates the full dataset: the per-ring bias table (stream 0), every
/// scene, and the default perturbed initial guess.
pub fn make_scenes(cfg: &SimConfig) -> Result<(Vec<Scene>, RigidTransform)> {
    cfg.intrinsics.validate()?;
    if cfg.num_scenes == 0 || cfg.scans_per_target == 0 {
        return Err(Error::InvalidArgument(
            "num_scenes and scans_per_target must be positive".into(),
        ));
    }
    let mut bias_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    bias_rng.set_stream(0);
    let bias: Vec<f64> = (0..cfg.elevations_deg.len())
        .map(|_| {
            if cfg.ring_bias_magnitude > 0.0 {
                bias_rng.random_range(-cfg.ring_bias_magnitude..cfg.ring_bias_magnitude)
            } else {
                0.0
            }
        })
        .collect();
    let spec = LidarSpec::new(
        cfg.elevations_deg.clone(),
        cfg.azimuth_resolution_deg,
        bias,
        cfg.range_noise_std,
    )?;

    let extrinsics = rig_extrinsics();
    let scenes: Vec<Scene> = (0..cfg.num_scenes)
        .map(|i| make_scene(cfg, &spec, i, &extrinsics).map(|(scene, _)| scene))
        .collect::<Result<_>>()?;
    let init = perturbed_init(cfg, &extrinsics);
    Ok((scenes, init))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_table_has_32_beams() {
        let e = default_elevations();
        assert_eq!(e.len(), 32);
        // Dense spacing in the middle, sparse at the edges.
        assert_relative_eq!(e[7] - e[6], 0.33, epsilon = 1e-12);
        assert_relative_eq!(e[1] - e[0], 1.36, epsilon = 1e-12);
        assert_relative_eq!(e[31] - e[30], 1.36, epsilon = 1e-12);
    }

    #[test]
    fn noise_free_points_lie_on_plane() {
        let spec = LidarSpec::thirty_two_beam(0.01);
        let model = TargetModel::new(0.805, 0.02).unwrap();
        let pose = target_pose(Point3::new(3.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), 45.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cloud = sample_target(&spec, &model, &pose, &mut rng).unwrap();
        assert!(cloud.len() > 100);
        let normal = pose.apply_vector(&Vector3::x());
        let center = pose.translation();
        for p in cloud.positions() {
            let off = (p.coords - center).dot(&normal).abs();
            assert!(off < 1e-6, "point off plane by {off}");
        }
    }

    #[test]
    fn dense_region_hits_enough_rings() {
        let spec = LidarSpec::thirty_two_beam(0.1);
        let model = TargetModel::new(0.805, 0.02).unwrap();
        let pose = target_pose(Point3::new(3.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), 45.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cloud = sample_target(&spec, &model, &pose, &mut rng).unwrap();
        assert!(cloud.ring_count() >= 6, "only {} rings", cloud.ring_count());
    }

    #[test]
    fn debiased_points_lie_on_their_rays() {
        let mut spec = LidarSpec::thirty_two_beam(0.1);
        spec.ring_range_bias = (0..32).map(|i| 0.03 * ((i % 3) as f64 - 1.0)).collect();
        spec.range_noise_std = 0.0;
        let model = TargetModel::new(0.805, 0.02).unwrap();
        let pose = target_pose(Point3::new(2.5, 0.2, 0.0), Vector3::new(-1.0, -0.1, 0.0), 45.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = sample_target(&spec, &model, &pose, &mut rng).unwrap();
        let normal = pose.apply_vector(&Vector3::x());
        let center = pose.translation();
        for p in &cloud.points {
            let bias = spec.ring_range_bias[p.ring as usize];
            let range = p.position.coords.norm();
            let dir = p.position.coords / range;
            let debiased = dir * (range - bias);
            // After removing the bias the point is back on the plane.
            let off = (debiased - center).dot(&normal).abs();
            assert!(off < 1e-9, "debiased point off plane by {off}");
        }
    }

    #[test]
    fn no_beam_intersection_is_error() {
        let spec = LidarSpec::thirty_two_beam(0.1);
        let model = TargetModel::new(0.2, 0.02).unwrap();
        // Far above the highest beam.
        let pose = target_pose(Point3::new(2.0, 0.0, 5.0), Vector3::new(-1.0, 0.0, -0.5), 45.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_target(&spec, &model, &pose, &mut rng),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn make_scenes_produces_expected_shape() {
        let cfg = SimConfig::default().noise_free();
        let (scenes, _init) = make_scenes(&cfg).unwrap();
        assert_eq!(scenes.len(), 7);
        for scene in &scenes {
            assert_eq!(scene.targets.len(), 2);
            for t in &scene.targets {
                assert_eq!(t.scans.len(), 5);
                assert!(t.scans.iter().all(|s| !s.is_empty()));
            }
            assert!(scene.truth.is_some());
        }
        // Large target first, by construction.
        assert!(scenes[0].targets[0].model.side() > scenes[0].targets[1].model.side());
    }

    #[test]
    fn zero_corner_noise_reprojects_exactly() {
        let cfg = SimConfig::default().noise_free();
        let (scenes, _) = make_scenes(&cfg).unwrap();
        for scene in &scenes {
            let truth = scene.truth.as_ref().unwrap();
            for (t, vertices) in scene.targets.iter().zip(&truth.target_vertices) {
                let mut projected: Vec<PixelPoint> = vertices
                    .iter()
                    .map(|v| camera::project(v, &scene.intrinsics, &truth.extrinsics).unwrap())
                    .collect();
                let mut corners = t.image_corners.to_vec();
                let key = |p: &PixelPoint| (p.u, p.v);
                projected.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
                corners.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
                for (a, b) in projected.iter().zip(&corners) {
                    assert_relative_eq!(a.u, b.u, epsilon = 1e-9);
                    assert_relative_eq!(a.v, b.v, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SimConfig::default();
        let (a, init_a) = make_scenes(&cfg).unwrap();
        let (b, init_b) = make_scenes(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (sa, sb) in a.iter().zip(&b) {
            for (ta, tb) in sa.targets.iter().zip(&sb.targets) {
                assert_eq!(ta.scans, tb.scans);
                assert_eq!(ta.image_corners, tb.image_corners);
            }
        }
        assert_eq!(init_a.translation(), init_b.translation());
    }

    #[test]
    fn per_ring_bias_clusters_residuals_by_ring() {
        // Between-ring spread of plane residuals dominates within-ring
        // spread when per-ring bias is on.
        let mut spec = LidarSpec::thirty_two_beam(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        spec.ring_range_bias = (0..32).map(|_| rng.random_range(-0.03..0.03)).collect();
        spec.range_noise_std = 0.005;
        let model = TargetModel::new(0.805, 0.02).unwrap();
        let pose = target_pose(Point3::new(3.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), 45.0);
        let cloud = sample_target(&spec, &model, &pose, &mut rng).unwrap();

        let normal = pose.apply_vector(&Vector3::x());
        let center = pose.translation();
        let mut by_ring: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
        for p in &cloud.points {
            by_ring
                .entry(p.ring)
                .or_default()
                .push((p.position.coords - center).dot(&normal));
        }
        let ring_means: Vec<f64> = by_ring
            .values()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        let grand = ring_means.iter().sum::<f64>() / ring_means.len() as f64;
        let between = ring_means
            .iter()
            .map(|m| (m - grand).powi(2))
            .sum::<f64>()
            / ring_means.len() as f64;
        let within = by_ring
            .values()
            .map(|v| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
            })
            .sum::<f64>()
            / by_ring.len() as f64;
        assert!(
            between / within > 5.0,
            "variance ratio {} too small",
            between / within
        );
    }
}
