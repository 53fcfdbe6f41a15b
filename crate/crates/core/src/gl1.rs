//! Target-vertex estimation by fitting the ideal target volume to the whole
//! point cloud.
//!
//! The fit searches SE(3) for the pullback transform that minimizes the
//! interval hinge cost of the cloud against the target's box volume, then
//! maps the reference vertices through the inverse of the optimum. The
//! vertices therefore always form an exact square of the modeled edge
//! length; no edge points are ever extracted.

use nalgebra::{DMatrix, Matrix3, RowVector3, Vector3};

use crate::camera::PixelPoint;
use crate::error::{Error, Result};
use crate::extrinsic::canonical_order;
use crate::geometry::{Point3, PointCloud, PoseChart, RigidTransform};
use crate::optim::{nelder_mead, SimplexOptions};
use crate::target::{self, TargetModel};

/// Minimum cloud size accepted by the fit.
pub const MIN_POINTS: usize = 10;

/// Simplex steps used to seed each restart: radians for the three rotation
/// parameters, meters for the three translations.
const ROTATION_STEP: f64 = 0.02;
const TRANSLATION_STEP: f64 = 0.02;

/// Options for the volume fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Overrides the data-driven volume half-thickness.
    pub thickness_override: Option<f64>,
    /// Iteration cap per restart.
    pub max_iterations: usize,
    /// In-plane restart angles, in degrees. The square's 90-degree symmetry
    /// means covering [0, 90) suffices.
    pub restart_angles_deg: Vec<f64>,
    /// Simplex diameter tolerance, in chart units.
    pub x_tolerance: f64,
    /// Cost-spread tolerance, in meters.
    pub f_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            thickness_override: None,
            max_iterations: 2000,
            restart_angles_deg: vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0],
            x_tolerance: 1e-6,
            f_tolerance: 1e-9,
        }
    }
}

/// Four estimated target vertices in the LiDAR frame, in canonical order.
#[derive(Debug, Clone)]
pub struct VertexEstimate {
    pub vertices: [Point3; 4],
    /// Pose mapping the reference vertices onto the estimate. `None` for
    /// estimators (like the edge-line baseline) that do not impose the
    /// target geometry.
    pub fit_transform: Option<RigidTransform>,
    /// Hinge cost at the optimum, in meters.
    pub residual_cost: f64,
    /// Iterations spent by the winning restart.
    pub iterations: usize,
    pub converged: bool,
    /// True when the vertices are an exact square by construction.
    pub geometry_imposed: bool,
}

/// Per-restart diagnostics from [`fit_target_report`].
#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct CloudShape {
    centroid: Point3,
    /// Right singular vectors of the centered cloud, descending.
    axes: [Vector3<f64>; 3],
}

fn principal_axes(cloud: &PointCloud) -> Result<CloudShape> {
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
            "cloud has no planar spread (points are collinear)".into(),
        ));
    }
    let v_t = svd.v_t.expect("svd requested v_t");
    let axis = |row: usize| Vector3::new(v_t[(row, 0)], v_t[(row, 1)], v_t[(row, 2)]).normalize();
    Ok(CloudShape {
        centroid,
        axes: [axis(0), axis(1), axis(2)],
    })
}

fn validate_cloud(cloud: &PointCloud) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if cloud.len() < MIN_POINTS {
        return Err(Error::DegenerateInput(format!(
            "need at least {MIN_POINTS} points, got {}",
            cloud.len()
        )));
    }
    if cloud.ring_count() < 2 {
        return Err(Error::DegenerateInput(
            "cloud spans a single ring; target pose is unidentifiable".into(),
        ));
    }
    Ok(())
}

/// Builds the multi-start pullback charts for a cloud: translation from the
/// centroid, face normal from the PCA minor axis (signed away from the
/// sensor), and one candidate per in-plane restart angle.
pub fn initial_poses(cloud: &PointCloud, angles_deg: &[f64]) -> Result<Vec<PoseChart>> {
    validate_cloud(cloud)?;
    let shape = principal_axes(cloud)?;

    let mut normal = shape.axes[2];
    if normal.dot(&shape.centroid.coords) < 0.0 {
        normal = -normal;
    }
    let base_y = shape.axes[0];
    // Re-orthogonalize against the signed normal.
    let base_y = (base_y - normal * normal.dot(&base_y)).normalize();

    let mut charts = Vec::with_capacity(angles_deg.len());
    for &angle_deg in angles_deg {
        // Nudge away from the chart singularity if a candidate lands on it.
        for nudge_deg in [0.0, 2.0] {
            let angle = (angle_deg + nudge_deg).to_radians();
            let y_axis = nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(normal),
                angle,
            ) * base_y;
            let z_axis = normal.cross(&y_axis);
            let rot = Matrix3::from_columns(&[normal, y_axis, z_axis]);
            let pose = RigidTransform::from_basis(&rot, shape.centroid.coords);
            if let Ok(chart) = pose.inverse().to_chart() {
                charts.push(chart);
                break;
            }
        }
    }
    if charts.is_empty() {
        return Err(Error::DegenerateInput(
            "no usable initial pose candidate".into(),
        ));
    }
    Ok(charts)
}

fn canonical_vertex_order(vertices: &[Point3; 4]) -> Result<[usize; 4]> {
    // LiDAR frame: +y is left, +z is up. Mapping to screen-like axes keeps
    // this ordering consistent with the image-side corner sort.
    let as_pixels = [
        PixelPoint::new(-vertices[0].y, -vertices[0].z),
        PixelPoint::new(-vertices[1].y, -vertices[1].z),
        PixelPoint::new(-vertices[2].y, -vertices[2].z),
        PixelPoint::new(-vertices[3].y, -vertices[3].z),
    ];
    canonical_order(&as_pixels)
}

pub(crate) fn order_vertices(vertices: [Point3; 4]) -> [Point3; 4] {
    match canonical_vertex_order(&vertices) {
        Ok(order) => [
            vertices[order[0]],
            vertices[order[1]],
            vertices[order[2]],
            vertices[order[3]],
        ],
        // Degenerate screen-plane layout: keep construction order.
        Err(_) => vertices,
    }
}

/// Fits the target volume to the cloud and reports per-restart outcomes
/// alongside the best estimate.
pub fn fit_target_report(
    cloud: &PointCloud,
    model: &TargetModel,
    opts: &FitOptions,
) -> Result<(VertexEstimate, Vec<StartOutcome>)> {
    validate_cloud(cloud)?;
    let thickness = match opts.thickness_override {
        Some(eps) => eps,
        None => target::default_thickness(cloud)?,
    };
    let model = model.with_thickness(thickness)?;
    let half = model.side() / 2.0;
    let eps = model.thickness();

    let positions: Vec<Vector3<f64>> = cloud.positions().map(|p| p.coords).collect();
    let cost = |x: &[f64]| -> f64 {
        let t = PoseChart::from_array([x[0], x[1], x[2], x[3], x[4], x[5]]).to_transform();
        let rot = *t.rotation_matrix();
        let trans = t.translation();
        positions
            .iter()
            .map(|p| {
                let q = rot * p + trans;
                target::hinge(q.x, eps) + target::hinge(q.y, half) + target::hinge(q.z, half)
            })
            .sum()
    };

    let starts = initial_poses(cloud, &opts.restart_angles_deg)?;
    let simplex_opts = SimplexOptions::new(
        opts.max_iterations,
        opts.x_tolerance,
        opts.f_tolerance,
        vec![
            ROTATION_STEP,
            ROTATION_STEP,
            ROTATION_STEP,
            TRANSLATION_STEP,
            TRANSLATION_STEP,
            TRANSLATION_STEP,
        ],
    );

    let mut outcomes = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, PoseChart, f64, usize, bool)> = None;
    for (idx, start) in starts.iter().enumerate() {
        let x0 = start.to_array();
        let initial_cost = cost(&x0);
        let run = nelder_mead(&cost, &x0, &simplex_opts);
        outcomes.push(StartOutcome {
            initial_cost,
            final_cost: run.value,
            iterations: run.iterations,
            converged: run.converged,
        });
        let chart = PoseChart::from_array([run.x[0], run.x[1], run.x[2], run.x[3], run.x[4], run.x[5]]);
        let better = match &best {
            None => true,
            Some((_, _, best_cost, _, _)) => run.value < *best_cost,
        };
        if better {
            best = Some((idx, chart, run.value, run.iterations, run.converged));
        }
    }
    let (_, pullback_chart, residual_cost, iterations, converged) =
        best.expect("at least one restart ran");

    let fit_transform = pullback_chart.to_transform().inverse();
    let raw = model.reference_vertices();
    let vertices = order_vertices([
        fit_transform.apply(&raw[0]),
        fit_transform.apply(&raw[1]),
        fit_transform.apply(&raw[2]),
        fit_transform.apply(&raw[3]),
    ]);

    Ok((
        VertexEstimate {
            vertices,
            fit_transform: Some(fit_transform),
            residual_cost,
            iterations,
            converged,
            geometry_imposed: true,
        },
        outcomes,
    ))
}

/// Fits the target volume to the cloud and returns the best estimate
/// across all restarts.
pub fn fit_target(
    cloud: &PointCloud,
    model: &TargetModel,
    opts: &FitOptions,
) -> Result<VertexEstimate> {
    fit_target_report(cloud, model, opts).map(|(estimate, _)| estimate)
}
