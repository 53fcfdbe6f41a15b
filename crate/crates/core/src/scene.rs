//! Scene data model and on-disk formats.
//!
//! A dataset directory holds one shared `intrinsics.json`, a default
//! `init_pose.json`, and one subdirectory per scene:
//!
//! ```text
//! dataset/
//!   intrinsics.json          # { "fx", "fy", "s", "cx", "cy" }
//!   init_pose.json           # { "rotation": [rx,ry,rz], "translation": [tx,ty,tz] }
//!   scene_01/
//!     scene.json             # targets, corner pixels, cloud file names, optional truth
//!     target_00_scan_00.csv  # x,y,z,ring
//!     ...
//! ```
//!
//! Point clouds are CSV with header `x,y,z,ring` (meters, integer ring).
//! Poses are axis-angle rotation vectors (radians) plus translations
//! (meters). Corner arrays hold 4 `[u, v]` pixel pairs per target; raw
//! (unsorted) corners are canonically sorted on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::extrinsic::canonical_sort;
use crate::geometry::{Frame, LidarPoint, Point3, PointCloud, PoseChart, RigidTransform};
use crate::target::TargetModel;

/// One observed target: its model, the selected scans, and the four image
/// corners in canonical order.
#[derive(Debug, Clone)]
pub struct TargetObservation {
    pub model: TargetModel,
    pub scans: Vec<PointCloud>,
    pub image_corners: [PixelPoint; 4],
}

/// Ground truth attached to synthetic scenes.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub extrinsics: RigidTransform,
    pub target_poses: Vec<RigidTransform>,
    pub target_vertices: Vec<[Point3; 4]>,
}

/// A paired observation: per-target point clouds and image corners under
/// one set of camera intrinsics.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub targets: Vec<TargetObservation>,
    pub intrinsics: Intrinsics,
    pub truth: Option<SceneTruth>,
}

/// JSON form of a rigid transform: axis-angle radians + meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseJson {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl PoseJson {
    pub fn from_transform(t: &RigidTransform) -> Result<Self> {
        let chart = t.to_chart()?;
        Ok(Self {
            rotation: [chart.rx, chart.ry, chart.rz],
            translation: [chart.tx, chart.ty, chart.tz],
        })
    }

    pub fn to_transform(&self) -> RigidTransform {
        PoseChart::new(
            self.rotation[0],
            self.rotation[1],
            self.rotation[2],
            self.translation[0],
            self.translation[1],
            self.translation[2],
        )
        .to_transform()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneFile {
    intrinsics: String,
    targets: Vec<TargetEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<TruthFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TargetEntry {
    side: f64,
    corners: Vec<[f64; 2]>,
    #[serde(default)]
    corners_sorted: bool,
    clouds: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    extrinsics: PoseJson,
    target_poses: Vec<PoseJson>,
    target_vertices: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CloudRow {
    x: f64,
    y: f64,
    z: f64,
    ring: u32,
}

fn malformed(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::MalformedInput {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| malformed(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a cloud as `x,y,z,ring` CSV.
pub fn write_cloud_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| malformed(path, e))?;
    for p in &cloud.points {
        writer
            .serialize(CloudRow {
                x: p.position.x,
                y: p.position.y,
                z: p.position.z,
                ring: p.ring,
            })
            .map_err(|e| malformed(path, e))?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads an `x,y,z,ring` CSV as a LiDAR-frame cloud.
pub fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(path, e))?;
    let mut points = Vec::new();
    for row in reader.deserialize::<CloudRow>() {
        let row = row.map_err(|e| malformed(path, e))?;
        if !(row.x.is_finite() && row.y.is_finite() && row.z.is_finite()) {
            return Err(malformed(path, "non-finite coordinate"));
        }
        points.push(LidarPoint::new(row.x, row.y, row.z, row.ring));
    }
    if points.is_empty() {
        return Err(malformed(path, "empty point cloud"));
    }
    Ok(PointCloud::new(points, Frame::Lidar))
}

/// Writes intrinsics, the default init pose, and every scene directory.
pub fn save_dataset(
    dir: &Path,
    scenes: &[Scene],
    init: &RigidTransform,
) -> Result<()> {
    let first = scenes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no scenes to save".into()))?;
    fs::create_dir_all(dir)?;
    write_json(&dir.join("intrinsics.json"), &first.intrinsics)?;
    write_json(&dir.join("init_pose.json"), &PoseJson::from_transform(init)?)?;

    for scene in scenes {
        let scene_dir = dir.join(&scene.name);
        fs::create_dir_all(&scene_dir)?;
        let mut entries = Vec::with_capacity(scene.targets.len());
        for (ti, target) in scene.targets.iter().enumerate() {
            let mut clouds = Vec::with_capacity(target.scans.len());
            for (si, scan) in target.scans.iter().enumerate() {
                let file = format!("target_{ti:02}_scan_{si:02}.csv");
                write_cloud_csv(&scene_dir.join(&file), scan)?;
                clouds.push(file);
            }
            entries.push(TargetEntry {
                side: target.model.side(),
                corners: target
                    .image_corners
                    .iter()
                    .map(|c| [c.u, c.v])
                    .collect(),
                corners_sorted: true,
                clouds,
            });
        }
        let truth = match &scene.truth {
            Some(t) => Some(TruthFile {
                extrinsics: PoseJson::from_transform(&t.extrinsics)?,
                target_poses: t
                    .target_poses
                    .iter()
                    .map(PoseJson::from_transform)
                    .collect::<Result<_>>()?,
                target_vertices: t
                    .target_vertices
                    .iter()
                    .map(|vs| vs.iter().map(|v| [v.x, v.y, v.z]).collect())
                    .collect(),
            }),
            None => None,
        };
        write_json(
            &scene_dir.join("scene.json"),
            &SceneFile {
                intrinsics: "../intrinsics.json".to_string(),
                targets: entries,
                truth,
            },
        )?;
    }
    Ok(())
}

/// Loads one scene directory. Raw (unsorted) corner quads are canonically
/// sorted here.
pub fn load_scene(scene_dir: &Path) -> Result<Scene> {
    let manifest_path = scene_dir.join("scene.json");
    let manifest: SceneFile = read_json(&manifest_path)?;

    let intrinsics_path = scene_dir.join(&manifest.intrinsics);
    let intrinsics: Intrinsics = read_json(&intrinsics_path)?;
    intrinsics.validate()?;

    let mut targets = Vec::with_capacity(manifest.targets.len());
    for entry in &manifest.targets {
        if entry.corners.len() != 4 {
            return Err(malformed(
                &manifest_path,
                format!("expected 4 corners per target, got {}", entry.corners.len()),
            ));
        }
        let mut corners = [PixelPoint::new(0.0, 0.0); 4];
        for (slot, c) in corners.iter_mut().zip(&entry.corners) {
            *slot = PixelPoint::new(c[0], c[1]);
        }
        let corners = if entry.corners_sorted {
            corners
        } else {
            canonical_sort(&corners)?
        };
        if entry.clouds.is_empty() {
            return Err(malformed(&manifest_path, "target has no cloud files"));
        }
        let scans: Vec<PointCloud> = entry
            .clouds
            .iter()
            .map(|f| read_cloud_csv(&scene_dir.join(f)))
            .collect::<Result<_>>()?;
        targets.push(TargetObservation {
            model: TargetModel::new(entry.side, crate::target::MIN_THICKNESS)?,
            scans,
            image_corners: corners,
        });
    }

    let truth = match manifest.truth {
        Some(t) => {
            let target_vertices = t
                .target_vertices
                .iter()
                .map(|vs| {
                    if vs.len() != 4 {
                        return Err(malformed(&manifest_path, "truth vertex set is not a quad"));
                    }
                    Ok([
                        Point3::new(vs[0][0], vs[0][1], vs[0][2]),
                        Point3::new(vs[1][0], vs[1][1], vs[1][2]),
                        Point3::new(vs[2][0], vs[2][1], vs[2][2]),
                        Point3::new(vs[3][0], vs[3][1], vs[3][2]),
                    ])
                })
                .collect::<Result<_>>()?;
            Some(SceneTruth {
                extrinsics: t.extrinsics.to_transform(),
                target_poses: t.target_poses.iter().map(PoseJson::to_transform).collect(),
                target_vertices,
            })
        }
        None => None,
    };

    let name = scene_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string());
    Ok(Scene {
        name,
        targets,
        intrinsics,
        truth,
    })
}

/// Loads every `scene_*/scene.json` under a dataset root, sorted by name.
pub fn load_dataset(root: &Path) -> Result<Vec<Scene>> {
    if !root.exists() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("scene.json").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no scene directories under {}",
            root.display()
        )));
    }
    dirs.iter().map(|d| load_scene(d)).collect()
}

/// Loads the dataset's default initial extrinsic guess.
pub fn load_init_pose(root: &Path) -> Result<RigidTransform> {
    let pose: PoseJson = read_json(&root.join("init_pose.json"))?;
    Ok(pose.to_transform())
}
