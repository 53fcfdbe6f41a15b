//! Round-robin cross-validation: fit extrinsics on a subset of scenes,
//! evaluate pixel RMS per corner on every scene, rotate the fitting subset.
//!
//! Report rows carry one RMS cell per scene; the fitting cells repeat the
//! in-sample RMS of the combined fitting set, and the row mean/std are
//! computed over the validation cells only.

use rayon::prelude::*;

use crate::baseline::{baseline_vertices, BaselineOptions};
use crate::error::{Error, Result};
use crate::extrinsic::{
    rms_per_corner, solve_iou, solve_pnp, CalibrationResult, Correspondences, Objective,
    SolveOptions,
};
use crate::geometry::{PointCloud, RigidTransform};
use crate::gl1::{fit_target, FitOptions, VertexEstimate};
use crate::scene::Scene;

/// Which vertex estimator feeds the correspondences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gl1,
    Baseline,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Gl1 => write!(f, "gl1"),
            Method::Baseline => write!(f, "baseline"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gl1" => Ok(Method::Gl1),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected gl1 or baseline)"
            ))),
        }
    }
}

/// Harness configuration.
#[derive(Debug, Clone)]
pub struct ValidationConfig {
    pub fit_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub objective: Objective,
    /// Cap on the number of fitting sets per size (they grow
    /// combinatorially); sets are enumerated lexicographically.
    pub max_sets_per_size: usize,
    pub fit_options: FitOptions,
    pub baseline_options: BaselineOptions,
    pub solve_options: SolveOptions,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            fit_sizes: vec![1],
            methods: vec![Method::Gl1, Method::Baseline],
            objective: Objective::Pnp,
            max_sets_per_size: 35,
            fit_options: FitOptions::default(),
            baseline_options: BaselineOptions::default(),
            solve_options: SolveOptions::default(),
        }
    }
}

/// Estimates the vertices of every target in a scene with the given
/// method. Scans are aggregated per target: concatenated for the volume
/// fit, kept per-scan for the baseline's edge extraction.
pub fn scene_vertex_estimates(
    scene: &Scene,
    method: Method,
    fit_opts: &FitOptions,
    baseline_opts: &BaselineOptions,
) -> Result<Vec<VertexEstimate>> {
    scene
        .targets
        .iter()
        .map(|target| match method {
            Method::Gl1 => {
                let combined = PointCloud::concat(&target.scans)?;
                fit_target(&combined, &target.model, fit_opts)
            }
            Method::Baseline => baseline_vertices(&target.scans, baseline_opts),
        })
        .collect()
}

/// Builds correspondences from per-target estimates and a scene's corners.
pub fn scene_correspondences(
    scenes: &[&Scene],
    estimates: &[&[VertexEstimate]],
    init: &RigidTransform,
) -> Result<Correspondences> {
    let mut vertex_sets = Vec::new();
    let mut corner_sets = Vec::new();
    for (scene, scene_estimates) in scenes.iter().zip(estimates) {
        for (target, estimate) in scene.targets.iter().zip(scene_estimates.iter()) {
            vertex_sets.push(estimate.vertices);
            corner_sets.push(target.image_corners);
        }
    }
    let intr = scenes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no scenes".into()))?
        .intrinsics;
    Correspondences::build(&vertex_sets, &corner_sets, &intr, init)
}

/// Solves for extrinsics on the given correspondences with the configured
/// objective.
pub fn solve_extrinsics(
    c: &Correspondences,
    scenes: &[&Scene],
    init: &RigidTransform,
    objective: Objective,
    opts: &SolveOptions,
) -> Result<CalibrationResult> {
    let intr = scenes[0].intrinsics;
    match objective {
        Objective::Pnp => solve_pnp(c, &intr, init, opts),
        Objective::Iou => solve_iou(c, &intr, init, opts),
    }
}

/// One report row: a fitting set evaluated on every scene.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub fit_indices: Vec<usize>,
    pub method: Method,
    pub objective: Objective,
    /// Targets in the fitting set (4 corners each).
    pub tag_count: usize,
    /// RMS pixels per corner, one cell per scene; fitting cells carry the
    /// in-sample RMS of the combined fitting set.
    pub cells: Vec<f64>,
    /// Mean over validation cells only.
    pub mean: f64,
    /// Sample standard deviation over validation cells only.
    pub std: f64,
}

impl ReportRow {
    pub fn fit_label(&self) -> String {
        self.fit_indices
            .iter()
            .map(|i| format!("S{}", i + 1))
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn is_fit_cell(&self, scene_idx: usize) -> bool {
        self.fit_indices.contains(&scene_idx)
    }
}

/// The full round-robin grid.
#[derive(Debug, Clone)]
pub struct RoundRobinReport {
    pub scene_names: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Mean and sample standard deviation of a row's validation cells,
/// recomputed from the grid.
pub fn summarize_validation_cells(row: &ReportRow) -> (f64, f64) {
    let values: Vec<f64> = row
        .cells
        .iter()
        .enumerate()
        .filter(|(i, _)| !row.is_fit_cell(*i))
        .map(|(_, v)| *v)
        .collect();
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    };
    (mean, std)
}

impl RoundRobinReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fitting,method,objective,tags");
        for name in &self.scene_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",mean,std\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                row.fit_label(),
                row.method,
                row.objective,
                row.tag_count
            ));
            for cell in &row.cells {
                out.push_str(&format!(",{cell:.4}"));
            }
            out.push_str(&format!(",{:.4},{:.4}\n", row.mean, row.std));
        }
        out
    }

    /// Markdown table mirroring the CSV; fitting cells are bracketed.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| fitting | method | objective | tags |");
        for name in &self.scene_names {
            out.push_str(&format!(" {name} |"));
        }
        out.push_str(" mean | std |\n|");
        for _ in 0..(4 + self.scene_names.len() + 2) {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} |",
                row.fit_label(),
                row.method,
                row.objective,
                row.tag_count
            ));
            for (i, cell) in row.cells.iter().enumerate() {
                if row.is_fit_cell(i) {
                    out.push_str(&format!(" [{cell:.4}] |"));
                } else {
                    out.push_str(&format!(" {cell:.4} |"));
                }
            }
            out.push_str(&format!(" {:.4} | {:.4} |\n", row.mean, row.std));
        }
        out
    }
}

/// Lexicographic k-combinations of `0..n`, capped at `max_sets`.
fn combinations(n: usize, k: usize, max_sets: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        if out.len() >= max_sets {
            break;
        }
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        if idx[i] == i + n - k {
            return out;
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Runs the full study: estimates vertices once per (scene, method), then
/// fits extrinsics per fitting set and fills the validation grid.
pub fn round_robin(
    scenes: &[Scene],
    init: &RigidTransform,
    cfg: &ValidationConfig,
) -> Result<RoundRobinReport> {
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("no scenes to validate".into()));
    }

    // Vertex estimation is the expensive part; do it once per method and
    // scene, in parallel.
    let mut jobs: Vec<(usize, Method)> = Vec::new();
    for &method in &cfg.methods {
        for i in 0..scenes.len() {
            jobs.push((i, method));
        }
    }
    let estimates: Vec<((usize, Method), Vec<VertexEstimate>)> = jobs
        .par_iter()
        .map(|&(i, method)| {
            scene_vertex_estimates(&scenes[i], method, &cfg.fit_options, &cfg.baseline_options)
                .map(|e| ((i, method), e))
        })
        .collect::<Result<_>>()?;
    let estimate_for = |i: usize, method: Method| -> &[VertexEstimate] {
        estimates
            .iter()
            .find(|((j, m), _)| *j == i && *m == method)
            .map(|(_, e)| e.as_slice())
            .expect("estimate computed for every scene and method")
    };

    // Cells per (method, fitting set): the solve is cheap relative to the
    // vertex fits, so rows run sequentially and deterministically.
    let mut rows = Vec::new();
    for &size in &cfg.fit_sizes {
        for set in combinations(scenes.len(), size, cfg.max_sets_per_size) {
            for &method in &cfg.methods {
                let fit_scenes: Vec<&Scene> = set.iter().map(|&i| &scenes[i]).collect();
                let fit_estimates: Vec<&[VertexEstimate]> =
                    set.iter().map(|&i| estimate_for(i, method)).collect();
                let fit_corrs = scene_correspondences(&fit_scenes, &fit_estimates, init)?;
                let solved =
                    solve_extrinsics(&fit_corrs, &fit_scenes, init, cfg.objective, &cfg.solve_options)?;

                let fit_rms =
                    rms_per_corner(&fit_corrs, &scenes[0].intrinsics, &solved.extrinsics);
                let mut cells = Vec::with_capacity(scenes.len());
                for (i, scene) in scenes.iter().enumerate() {
                    if set.contains(&i) {
                        cells.push(fit_rms);
                        continue;
                    }
                    let eval_scenes = [scene];
                    let eval_estimates = [estimate_for(i, method)];
                    let corrs = scene_correspondences(
                        &eval_scenes[..],
                        &eval_estimates[..],
                        init,
                    )?;
                    cells.push(rms_per_corner(
                        &corrs,
                        &scene.intrinsics,
                        &solved.extrinsics,
                    ));
                }
                let tag_count: usize = set.iter().map(|&i| scenes[i].targets.len()).sum();
                let mut row = ReportRow {
                    fit_indices: set.clone(),
                    method,
                    objective: cfg.objective,
                    tag_count,
                    cells,
                    mean: 0.0,
                    std: 0.0,
                };
                let (mean, std) = summarize_validation_cells(&row);
                row.mean = mean;
                row.std = std;
                rows.push(row);
            }
        }
    }

    Ok(RoundRobinReport {
        scene_names: scenes.iter().map(|s| s.name.clone()).collect(),
        rows,
    })
}
