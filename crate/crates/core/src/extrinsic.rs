//! LiDAR-to-camera extrinsic solvers: reprojection (PnP) minimization and
//! polygon-IoU maximization over the 6-parameter pose chart, plus the
//! canonical vertex/corner ordering that makes correspondences trivial.

use nalgebra::{DMatrix, DVector};

use crate::camera::{self, Intrinsics, PixelPoint, BEHIND_CAMERA_PENALTY};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PoseChart, RigidTransform};
use crate::optim::{nelder_mead, SimplexOptions};
use crate::polygon::{ccw_sort, iou};

/// Which cost a calibration run optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Pnp,
    Iou,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::Pnp => write!(f, "pnp"),
            Objective::Iou => write!(f, "iou"),
        }
    }
}

/// One target's matched quadruples, both sides in canonical order.
#[derive(Debug, Clone)]
pub struct TargetCorrespondence {
    pub lidar_vertices: [Point3; 4],
    pub image_corners: [PixelPoint; 4],
}

/// Matched vertices and corners for `n >= 1` targets (4n point pairs).
#[derive(Debug, Clone)]
pub struct Correspondences {
    pub targets: Vec<TargetCorrespondence>,
}

impl Correspondences {
    /// Pairs up per-target vertex and corner quadruples, canonically
    /// sorting both sides: image corners directly, LiDAR vertices by their
    /// projection under the initial-guess extrinsics.
    pub fn build(
        vertex_sets: &[[Point3; 4]],
        corner_sets: &[[PixelPoint; 4]],
        intr: &Intrinsics,
        init: &RigidTransform,
    ) -> Result<Self> {
        if vertex_sets.is_empty() || vertex_sets.len() != corner_sets.len() {
            return Err(Error::InvalidArgument(format!(
                "mismatched correspondence inputs: {} vertex sets vs {} corner sets",
                vertex_sets.len(),
                corner_sets.len()
            )));
        }
        let mut targets = Vec::with_capacity(vertex_sets.len());
        for (vertices, corners) in vertex_sets.iter().zip(corner_sets) {
            let projected: [PixelPoint; 4] = {
                let mut ps = [PixelPoint::new(0.0, 0.0); 4];
                for (slot, v) in ps.iter_mut().zip(vertices) {
                    *slot = camera::project(v, intr, init)?;
                }
                ps
            };
            let vertex_order = canonical_order(&projected)?;
            let corner_order = canonical_order(corners)?;
            let mut lidar_vertices = *vertices;
            let mut image_corners = *corners;
            for i in 0..4 {
                lidar_vertices[i] = vertices[vertex_order[i]];
                image_corners[i] = corners[corner_order[i]];
            }
            targets.push(TargetCorrespondence {
                lidar_vertices,
                image_corners,
            });
        }
        Ok(Self { targets })
    }

    /// Total number of matched point pairs (4n).
    pub fn corner_count(&self) -> usize {
        4 * self.targets.len()
    }

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }
}

/// Canonical order of a quad: topmost point (minimum v, ties by minimum u)
/// first, then the rest clockwise on screen (ascending angle about the
/// quad's centroid in u-right / v-down coordinates). For a diamond this
/// reads top, right, bottom, left.
pub fn canonical_order(quad: &[PixelPoint; 4]) -> Result<[usize; 4]> {
    for i in 0..4 {
        for j in (i + 1)..4 {
            if quad[i].distance_to(&quad[j]) < 1e-9 {
                return Err(Error::DegenerateInput(format!(
                    "duplicate quad points at indices {i} and {j}"
                )));
            }
        }
    }
    let cu = quad.iter().map(|p| p.u).sum::<f64>() / 4.0;
    let cv = quad.iter().map(|p| p.v).sum::<f64>() / 4.0;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| {
        let ta = (quad[a].v - cv).atan2(quad[a].u - cu);
        let tb = (quad[b].v - cv).atan2(quad[b].u - cu);
        ta.partial_cmp(&tb).unwrap().then(a.cmp(&b))
    });
    let top = (0..4)
        .min_by(|&a, &b| {
            let ka = (quad[order[a]].v, quad[order[a]].u);
            let kb = (quad[order[b]].v, quad[order[b]].u);
            ka.partial_cmp(&kb).unwrap()
        })
        .unwrap();
    order.rotate_left(top);
    Ok(order)
}

/// Applies [`canonical_order`] to the quad itself.
pub fn canonical_sort(quad: &[PixelPoint; 4]) -> Result<[PixelPoint; 4]> {
    let order = canonical_order(quad)?;
    Ok([
        quad[order[0]],
        quad[order[1]],
        quad[order[2]],
        quad[order[3]],
    ])
}

/// Solver knobs shared by both objectives.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Simplex diameter tolerance, in chart units.
    pub x_tolerance: f64,
    /// Cost-spread tolerance.
    pub f_tolerance: f64,
    /// Run a Gauss-Newton polish on the smooth PnP objective.
    pub refine: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            x_tolerance: 1e-9,
            f_tolerance: 1e-12,
            refine: true,
        }
    }
}

/// Cost-change tolerance of the Gauss-Newton polish.
const REFINE_TOL: f64 = 1e-10;

/// A solved extrinsic transform with its diagnostics.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub extrinsics: RigidTransform,
    pub objective: Objective,
    /// Final objective value: summed squared pixel error for PnP,
    /// `1 - mean IoU` for IoU.
    pub final_cost: f64,
    pub rms_per_corner: f64,
    pub converged: bool,
    /// Set when only one target was available (pose may not be unique).
    pub underdetermined: bool,
}

/// Squared reprojection residual over all corners; behind-camera corners
/// contribute the squared penalty instead of erroring.
fn pnp_cost(c: &Correspondences, intr: &Intrinsics, extr: &RigidTransform) -> f64 {
    let mut cost = 0.0;
    for t in &c.targets {
        for (vertex, corner) in t.lidar_vertices.iter().zip(&t.image_corners) {
            cost += match camera::project(vertex, intr, extr) {
                Ok(p) => {
                    let du = p.u - corner.u;
                    let dv = p.v - corner.v;
                    du * du + dv * dv
                }
                Err(_) => BEHIND_CAMERA_PENALTY * BEHIND_CAMERA_PENALTY,
            };
        }
    }
    cost
}

/// Mean of the per-target polygon IoU values. A target with any vertex
/// behind the camera contributes zero.
fn mean_iou(c: &Correspondences, intr: &Intrinsics, extr: &RigidTransform) -> f64 {
    let mut total = 0.0;
    for t in &c.targets {
        let mut projected = Vec::with_capacity(4);
        let mut visible = true;
        for vertex in &t.lidar_vertices {
            match camera::project(vertex, intr, extr) {
                Ok(p) => projected.push(p),
                Err(_) => {
                    visible = false;
                    break;
                }
            }
        }
        if visible {
            let lidar_poly = ccw_sort(&projected);
            let corner_poly = ccw_sort(&t.image_corners);
            total += iou(&lidar_poly, &corner_poly);
        }
    }
    total / c.targets.len() as f64
}

/// Root-mean-square pixel error per corner: the square root of the mean
/// squared distance between projected vertices and image corners. Uses the
/// behind-camera penalty so it is total on any pose.
pub fn rms_per_corner(c: &Correspondences, intr: &Intrinsics, extr: &RigidTransform) -> f64 {
    (pnp_cost(c, intr, extr) / c.corner_count() as f64).sqrt()
}

fn chart_steps() -> Vec<f64> {
    vec![0.02, 0.02, 0.02, 0.02, 0.02, 0.02]
}

/// Minimizes the summed squared reprojection error from `init`.
///
/// Fails if every corner projects behind the camera at the initial pose.
pub fn solve_pnp(
    c: &Correspondences,
    intr: &Intrinsics,
    init: &RigidTransform,
    opts: &SolveOptions,
) -> Result<CalibrationResult> {
    intr.validate()?;
    let any_visible = c.targets.iter().any(|t| {
        t.lidar_vertices
            .iter()
            .any(|v| camera::project(v, intr, init).is_ok())
    });
    if !any_visible {
        return Err(Error::BehindCamera);
    }

    let chart0 = init.to_chart()?;
    let cost = |x: &[f64]| {
        let extr = PoseChart::from_array([x[0], x[1], x[2], x[3], x[4], x[5]]).to_transform();
        pnp_cost(c, intr, &extr)
    };
    let simplex_opts = SimplexOptions::new(
        opts.max_iterations,
        opts.x_tolerance,
        opts.f_tolerance,
        chart_steps(),
    );
    let nm = nelder_mead(cost, &chart0.to_array(), &simplex_opts);

    let mut best_chart = PoseChart::from_array([nm.x[0], nm.x[1], nm.x[2], nm.x[3], nm.x[4], nm.x[5]]);
    let mut best_cost = nm.value;
    if opts.refine {
        let (chart, cost) = gauss_newton_refine(c, intr, best_chart, best_cost);
        best_chart = chart;
        best_cost = cost;
    }

    let extrinsics = best_chart.to_transform();
    Ok(CalibrationResult {
        extrinsics,
        objective: Objective::Pnp,
        final_cost: best_cost,
        rms_per_corner: (best_cost / c.corner_count() as f64).sqrt(),
        converged: nm.converged,
        underdetermined: c.target_count() < 2,
    })
}

/// Gauss-Newton polish on the smooth reprojection objective with central
/// finite-difference Jacobians. Keeps a step only when it lowers the cost.
fn gauss_newton_refine(
    c: &Correspondences,
    intr: &Intrinsics,
    start: PoseChart,
    start_cost: f64,
) -> (PoseChart, f64) {
    const H: f64 = 1e-7;
    const MAX_STEPS: usize = 50;

    let residuals = |chart: &PoseChart| -> Option<DVector<f64>> {
        let extr = chart.to_transform();
        let mut r = DVector::zeros(2 * c.corner_count());
        let mut k = 0;
        for t in &c.targets {
            for (vertex, corner) in t.lidar_vertices.iter().zip(&t.image_corners) {
                let p = camera::project(vertex, intr, &extr).ok()?;
                r[k] = p.u - corner.u;
                r[k + 1] = p.v - corner.v;
                k += 2;
            }
        }
        Some(r)
    };

    let mut chart = start;
    let mut cost = start_cost;
    for _ in 0..MAX_STEPS {
        let Some(r) = residuals(&chart) else {
            return (chart, cost);
        };
        let m = r.len();
        let mut jac = DMatrix::zeros(m, 6);
        let x = chart.to_array();
        for d in 0..6 {
            let mut plus = x;
            let mut minus = x;
            plus[d] += H;
            minus[d] -= H;
            let (Some(rp), Some(rm)) = (
                residuals(&PoseChart::from_array(plus)),
                residuals(&PoseChart::from_array(minus)),
            ) else {
                return (chart, cost);
            };
            for i in 0..m {
                jac[(i, d)] = (rp[i] - rm[i]) / (2.0 * H);
            }
        }
        let jtj = jac.transpose() * &jac + DMatrix::identity(6, 6) * 1e-12;
        let jtr = jac.transpose() * &r;
        let Some(step) = jtj.lu().solve(&(-jtr)) else {
            return (chart, cost);
        };
        let mut next = x;
        for d in 0..6 {
            next[d] += step[d];
        }
        let next_chart = PoseChart::from_array(next);
        let next_cost = pnp_cost(c, intr, &next_chart.to_transform());
        if next_cost < cost {
            let improvement = cost - next_cost;
            chart = next_chart;
            cost = next_cost;
            if improvement < REFINE_TOL {
                break;
            }
        } else {
            break;
        }
    }
    (chart, cost)
}

/// Chart-space offsets probed around the initial pose when it has no
/// overlap: one step at a time per dimension, two magnitudes each way.
fn overlap_probes(chart0: &PoseChart) -> Vec<PoseChart> {
    let mut probes = vec![*chart0];
    let rot_steps = [0.035, -0.035, 0.07, -0.07];
    let trans_steps = [0.05, -0.05, 0.1, -0.1];
    for d in 0..6 {
        let steps = if d < 3 { &rot_steps } else { &trans_steps };
        for &s in steps {
            let mut x = chart0.to_array();
            x[d] += s;
            probes.push(PoseChart::from_array(x));
        }
    }
    probes
}

/// Maximizes the mean per-target IoU from `init` (or the best coarse probe
/// around it when `init` itself has zero overlap).
pub fn solve_iou(
    c: &Correspondences,
    intr: &Intrinsics,
    init: &RigidTransform,
    opts: &SolveOptions,
) -> Result<CalibrationResult> {
    intr.validate()?;
    let chart0 = init.to_chart()?;

    let objective = |chart: &PoseChart| mean_iou(c, intr, &chart.to_transform());
    let mut start = chart0;
    let mut start_iou = objective(&chart0);
    if start_iou <= 0.0 {
        for probe in overlap_probes(&chart0) {
            let value = objective(&probe);
            if value > start_iou {
                start = probe;
                start_iou = value;
            }
        }
        if start_iou <= 0.0 {
            return Err(Error::NoOverlap);
        }
    }

    let cost = |x: &[f64]| {
        1.0 - objective(&PoseChart::from_array([
            x[0], x[1], x[2], x[3], x[4], x[5],
        ]))
    };
    let simplex_opts = SimplexOptions::new(
        opts.max_iterations,
        opts.x_tolerance,
        opts.f_tolerance,
        chart_steps(),
    );
    let nm = nelder_mead(cost, &start.to_array(), &simplex_opts);
    let best_chart = PoseChart::from_array([nm.x[0], nm.x[1], nm.x[2], nm.x[3], nm.x[4], nm.x[5]]);
    let extrinsics = best_chart.to_transform();
    Ok(CalibrationResult {
        extrinsics,
        objective: Objective::Iou,
        final_cost: nm.value,
        rms_per_corner: rms_per_corner(c, intr, &extrinsics),
        converged: nm.converged,
        underdetermined: c.target_count() < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn px(u: f64, v: f64) -> PixelPoint {
        PixelPoint::new(u, v)
    }

    fn intr() -> Intrinsics {
        Intrinsics::new(600.0, 600.0, 0.0, 320.0, 240.0).unwrap()
    }

    /// A LiDAR-frame diamond centered ahead of the sensor, plus a camera
    /// pose that sees it.
    fn synthetic_setup() -> (Vec<[Point3; 4]>, RigidTransform) {
        // Camera 0.2 m below and 0.1 m ahead of the LiDAR, axes remapped
        // (x_cam = -y_l, y_cam = -z_l, z_cam = x_l).
        let rot = nalgebra::Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
            0.0, -1.0, 0.0, //
            0.0, 0.0, -1.0, //
            1.0, 0.0, 0.0,
        ));
        let cam_pos = nalgebra::Vector3::new(0.1, 0.0, -0.2);
        let extr = RigidTransform::new(rot, -(rot * cam_pos));

        let diamond = |cx: f64, cy: f64, cz: f64, r: f64| -> [Point3; 4] {
            [
                Point3::new(cx, cy, cz + r),
                Point3::new(cx, cy - r, cz),
                Point3::new(cx, cy, cz - r),
                Point3::new(cx, cy + r, cz),
            ]
        };
        (
            vec![
                diamond(3.0, 0.4, 0.1, 0.4),
                diamond(1.5, -0.35, -0.05, 0.11),
            ],
            extr,
        )
    }

    fn exact_correspondences(
        vertex_sets: &[[Point3; 4]],
        extr: &RigidTransform,
    ) -> Correspondences {
        let corners: Vec<[PixelPoint; 4]> = vertex_sets
            .iter()
            .map(|vs| {
                let mut c = [px(0.0, 0.0); 4];
                for (slot, v) in c.iter_mut().zip(vs) {
                    *slot = camera::project(v, &intr(), extr).unwrap();
                }
                c
            })
            .collect();
        Correspondences::build(vertex_sets, &corners, &intr(), extr).unwrap()
    }

    #[test]
    fn canonical_order_diamond() {
        // Image coordinates: v grows downward, so "top" is minimum v.
        let quad = [px(5.0, 10.0), px(0.0, 5.0), px(5.0, 0.0), px(10.0, 5.0)];
        let sorted = canonical_sort(&quad).unwrap();
        assert_eq!(sorted[0], px(5.0, 0.0)); // top
        assert_eq!(sorted[1], px(10.0, 5.0)); // right
        assert_eq!(sorted[2], px(5.0, 10.0)); // bottom
        assert_eq!(sorted[3], px(0.0, 5.0)); // left
    }

    #[test]
    fn canonical_order_stable_under_small_rotation() {
        let base = [px(5.0, 0.0), px(10.0, 5.0), px(5.0, 10.0), px(0.0, 5.0)];
        let angle = 5.0_f64.to_radians();
        let (s, c) = angle.sin_cos();
        let rotated: Vec<PixelPoint> = base
            .iter()
            .map(|p| {
                let (du, dv) = (p.u - 5.0, p.v - 5.0);
                px(5.0 + c * du - s * dv, 5.0 + s * du + c * dv)
            })
            .collect();
        let quad: [PixelPoint; 4] = [rotated[0], rotated[1], rotated[2], rotated[3]];
        let order = canonical_order(&quad).unwrap();
        assert_eq!(order, [0, 1, 2, 3]);
    }

    #[test]
    fn canonical_order_rejects_duplicates() {
        let quad = [px(1.0, 1.0), px(1.0, 1.0), px(2.0, 2.0), px(3.0, 1.0)];
        assert!(canonical_order(&quad).is_err());
    }

    #[test]
    fn rms_closed_forms() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices, &extr);
        assert_relative_eq!(rms_per_corner(&c, &intr(), &extr), 0.0, epsilon = 1e-9);

        // Shift every corner by (3, 4): RMS is exactly 5.
        let mut shifted = c.clone();
        for t in shifted.targets.iter_mut() {
            for corner in t.image_corners.iter_mut() {
                corner.u += 3.0;
                corner.v += 4.0;
            }
        }
        assert_relative_eq!(rms_per_corner(&shifted, &intr(), &extr), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn pnp_at_global_minimum_stays_there() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices, &extr);
        let result = solve_pnp(&c, &intr(), &extr, &SolveOptions::default()).unwrap();
        assert!(result.final_cost < 1e-12);
        assert!(result.extrinsics.rotation_angle_to(&extr) < 1e-6);
        assert!(result.extrinsics.translation_distance_to(&extr) < 1e-6);
    }

    #[test]
    fn pnp_recovers_from_perturbed_init() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices, &extr);
        let offset = PoseChart::new(0.05, -0.04, 0.06, 0.06, -0.05, 0.05).to_transform();
        let init = offset.compose(&extr);
        let result = solve_pnp(&c, &intr(), &init, &SolveOptions::default()).unwrap();
        assert!(
            result.extrinsics.rotation_angle_to(&extr).to_degrees() < 0.1,
            "rotation error {} deg",
            result.extrinsics.rotation_angle_to(&extr).to_degrees()
        );
        assert!(result.extrinsics.translation_distance_to(&extr) < 0.01);
        assert!(result.rms_per_corner < 0.5);
        assert!(!result.underdetermined);
    }

    #[test]
    fn pnp_descends_from_init() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices, &extr);
        let offset = PoseChart::new(0.03, 0.02, -0.03, -0.04, 0.05, 0.02).to_transform();
        let init = offset.compose(&extr);
        let init_cost = pnp_cost(&c, &intr(), &init);
        let result = solve_pnp(&c, &intr(), &init, &SolveOptions::default()).unwrap();
        assert!(result.final_cost <= init_cost);
    }

    #[test]
    fn pnp_single_target_flagged() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices[..1], &extr);
        let result = solve_pnp(&c, &intr(), &extr, &SolveOptions::default()).unwrap();
        assert!(result.underdetermined);
        assert!(result.final_cost < 1e-10);
    }

    #[test]
    fn pnp_all_behind_camera_errors() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices, &extr);
        // Point the camera the other way.
        let flip = PoseChart::new(0.0, std::f64::consts::PI - 1e-4, 0.0, 0.0, 0.0, 0.0)
            .to_transform();
        let behind = flip.compose(&extr);
        assert!(matches!(
            solve_pnp(&c, &intr(), &behind, &SolveOptions::default()),
            Err(Error::BehindCamera)
        ));
    }

    #[test]
    fn iou_perfect_at_truth() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices, &extr);
        assert_relative_eq!(mean_iou(&c, &intr(), &extr), 1.0, epsilon = 1e-6);
        let result = solve_iou(&c, &intr(), &extr, &SolveOptions::default()).unwrap();
        assert!(result.final_cost < 1e-6);
    }

    #[test]
    fn iou_recovers_from_perturbed_init() {
        let (vertices, extr) = synthetic_setup();
        let c = exact_correspondences(&vertices, &extr);
        let offset = PoseChart::new(0.02, -0.015, 0.02, 0.03, -0.03, 0.02).to_transform();
        let init = offset.compose(&extr);
        let result = solve_iou(&c, &intr(), &init, &SolveOptions::default()).unwrap();
        assert!(
            result.extrinsics.rotation_angle_to(&extr).to_degrees() < 0.3,
            "rotation error {} deg",
            result.extrinsics.rotation_angle_to(&extr).to_degrees()
        );
        assert!(result.extrinsics.translation_distance_to(&extr) < 0.02);
    }

    #[test]
    fn iou_no_overlap_errors() {
        let (vertices, extr) = synthetic_setup();
        let mut c = exact_correspondences(&vertices, &extr);
        // Push all image corners far outside anything the probes can reach.
        for t in c.targets.iter_mut() {
            for corner in t.image_corners.iter_mut() {
                corner.u += 1e5;
            }
        }
        assert!(matches!(
            solve_iou(&c, &intr(), &extr, &SolveOptions::default()),
            Err(Error::NoOverlap)
        ));
    }
}
