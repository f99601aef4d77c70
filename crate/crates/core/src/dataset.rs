//! On-disk synthetic dataset: generation, re-annotation and planning.
//!
//! Layout of a dataset root:
//!
//! ```text
//! objects.json          catalog entries used for generation
//! camera.json           nominal camera
//! manifest.json         generation parameters and the scene list
//! scenes/<name>/        scene.json, depth.pfm, valid.pgm, normals.pfm,
//!                       instance.pgm, annotations.json,
//!                       <name>_<id>_mask.pgm, <name>_<id>_poke.pgm
//! ```
//!
//! Scene `<object>_<view:04>` holds one catalog object in a random resting
//! placement, seen from a jittered camera.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::harness::catalog::{place, CatalogEntry, Placement};
use crate::harness::seed::{mix, rng};
use crate::io::{self, IoError};
use crate::plan::{heuristic_grasp, poking_point, GraspProposal, GripperSpec, PokePlan};
use crate::pokegt::{poking_regions, PokeGtError, PokeRegionConfig};
use crate::render::{render, RenderBuffers};
use crate::scene::{CameraModel, Scene, SceneError};

pub const OBJECTS_FILE: &str = "objects.json";
pub const CAMERA_FILE: &str = "camera.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENES_DIR: &str = "scenes";
pub const SCENE_FILE: &str = "scene.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

/// Mode index of per-view scene draws.
const VIEW_STREAM: u64 = 0x5CE7_E000;
/// Id of the generated object in every scene.
const OBJECT_ID: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no dataset at {0}")]
    MissingDataset(PathBuf),
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    PokeGt(#[from] PokeGtError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Number of catalog objects to use, taken from the front.
    pub objects: usize,
    pub views: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Half-range of the uniform camera-eye offset per axis, metres.
    pub camera_jitter: f64,
    pub placement_spread: f64,
    pub region: PokeRegionConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            objects: 9,
            views: 20,
            seed: 0,
            width: 640,
            height: 480,
            camera_jitter: 0.03,
            placement_spread: 0.05,
            region: PokeRegionConfig::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self, catalog_len: usize) -> Result<(), DatasetError> {
        let bad = |s: String| Err(DatasetError::InvalidConfig(s));
        if self.objects == 0 || self.objects > catalog_len {
            return bad(format!("objects must be between 1 and {catalog_len}"));
        }
        if self.views == 0 || self.views > 10_000 {
            return bad("views must be between 1 and 10000".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive".into());
        }
        if !(self.camera_jitter >= 0.0 && self.placement_spread >= 0.0) {
            return bad("jitter and spread must be non-negative".into());
        }
        self.region
            .validate()
            .map_err(|e| DatasetError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    pub object: String,
    pub object_index: usize,
    pub view: usize,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GenConfig,
    pub scenes: Vec<SceneEntry>,
}

/// One instance line of `annotations.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: u32,
    /// `[u_min, v_min, u_max, v_max]`, inclusive.
    pub bbox: [usize; 4],
    /// Instance mask area, pixels.
    pub area: usize,
    pub poke_area: usize,
    pub mask_file: String,
    pub poke_file: String,
}

pub fn scene_name(object: &str, view: usize) -> String {
    format!("{object}_{view:04}")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let bytes = io::read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| DatasetError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    io::write_file(path, s.as_bytes())
}

/// Camera looking at the origin from the nominal eye shifted by `offset`.
fn jittered(camera: &CameraModel, offset: Vector3<f64>) -> CameraModel {
    let eye = camera.center() + offset;
    let pose = Pose::look_at(eye, Vector3::zeros(), Vector3::z()).unwrap_or(camera.pose);
    CameraModel { pose, ..*camera }
}

/// The scene of one view, a pure function of the config and indices.
pub fn view_scene(
    entry: &CatalogEntry,
    object_index: usize,
    view: usize,
    camera: &CameraModel,
    cfg: &GenConfig,
) -> (Scene, Placement) {
    let mut r = rng(mix(cfg.seed, object_index as u64, VIEW_STREAM, view as u64));
    let placement = [Placement::Upright, Placement::UpsideDown, Placement::Side][r.gen_range(0..3)];
    let pose = place(entry, placement, cfg.placement_spread, &mut r);
    let j = cfg.camera_jitter;
    let offset = if j > 0.0 {
        Vector3::new(r.gen_range(-j..=j), r.gen_range(-j..=j), r.gen_range(-j..=j))
    } else {
        Vector3::zeros()
    };
    let cam = jittered(camera, offset);
    (Scene::new(cam, vec![entry.instantiate(OBJECT_ID, pose)]), placement)
}

/// Writes a full dataset under `root`. Existing files are overwritten.
pub fn generate(
    root: &Path,
    catalog: &[CatalogEntry],
    camera: &CameraModel,
    cfg: &GenConfig,
) -> Result<Manifest, DatasetError> {
    cfg.validate(catalog.len())?;
    let camera = camera.rescaled(cfg.width, cfg.height);
    camera.validate()?;
    let catalog = &catalog[..cfg.objects];
    io::create_dir(&root.join(SCENES_DIR))?;
    write_json(&root.join(OBJECTS_FILE), &catalog)?;
    write_json(&root.join(CAMERA_FILE), &camera)?;

    let jobs: Vec<(usize, usize)> = (0..catalog.len())
        .flat_map(|o| (0..cfg.views).map(move |v| (o, v)))
        .collect();
    let scenes = jobs
        .par_iter()
        .map(|&(o, v)| {
            let entry = &catalog[o];
            let (scene, placement) = view_scene(entry, o, v, &camera, cfg);
            let name = scene_name(&entry.name, v);
            let dir = root.join(SCENES_DIR).join(&name);
            io::create_dir(&dir)?;
            io::write_file(&dir.join(SCENE_FILE), scene.to_json().as_bytes())?;
            io::write_buffers(&dir, &render(&scene))?;
            annotate_scene(&dir, &name, &cfg.region)?;
            Ok(SceneEntry {
                name,
                object: entry.name.clone(),
                object_index: o,
                view: v,
                placement,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    let manifest = Manifest { config: *cfg, scenes };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_scene(dir: &Path) -> Result<(Scene, RenderBuffers), DatasetError> {
    let path = dir.join(SCENE_FILE);
    let text = io::read_file(&path)?;
    let scene = Scene::from_json(&String::from_utf8_lossy(&text))?;
    let buffers = io::read_buffers(dir, &scene.camera)?;
    Ok((scene, buffers))
}

/// Derives masks and poking regions from the stored buffers of one scene and
/// writes `annotations.json` with its PGM masks.
pub fn annotate_scene(
    dir: &Path,
    name: &str,
    cfg: &PokeRegionConfig,
) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let (scene, buffers) = load_scene(dir)?;
    let mut records = Vec::new();
    for ann in poking_regions(&buffers, &scene.table, cfg)? {
        let mask_file = format!("{name}_{}_mask.pgm", ann.id);
        let poke_file = format!("{name}_{}_poke.pgm", ann.id);
        io::write_file(&dir.join(&mask_file), &io::mask_to_pgm(&ann.mask))?;
        io::write_file(&dir.join(&poke_file), &io::mask_to_pgm(&ann.poking_region))?;
        let (u0, v0, u1, v1) = ann.bbox;
        records.push(AnnotationRecord {
            id: ann.id,
            bbox: [u0, v0, u1, v1],
            area: ann.mask.count(),
            poke_area: ann.poke_area(),
            mask_file,
            poke_file,
        });
    }
    write_json(&dir.join(ANNOTATIONS_FILE), &records)?;
    Ok(records)
}

/// A generated dataset as read back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub catalog: Vec<CatalogEntry>,
    pub camera: CameraModel,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self, DatasetError> {
        let required = [OBJECTS_FILE, CAMERA_FILE, MANIFEST_FILE];
        if required.iter().any(|f| !root.join(f).is_file()) {
            return Err(DatasetError::MissingDataset(root.to_path_buf()));
        }
        let camera: CameraModel = read_json(&root.join(CAMERA_FILE))?;
        camera.validate()?;
        Ok(Self {
            root: root.to_path_buf(),
            catalog: read_json(&root.join(OBJECTS_FILE))?,
            camera,
            manifest: read_json(&root.join(MANIFEST_FILE))?,
        })
    }

    pub fn scene_dir(&self, name: &str) -> PathBuf {
        self.root.join(SCENES_DIR).join(name)
    }

    /// Re-annotates every scene; returns the number of instances written.
    pub fn annotate(&self, cfg: &PokeRegionConfig) -> Result<usize, DatasetError> {
        cfg.validate()?;
        let counts = self
            .manifest
            .scenes
            .par_iter()
            .map(|s| annotate_scene(&self.scene_dir(&s.name), &s.name, cfg).map(|r| r.len()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(counts.iter().sum())
    }

    pub fn annotations(&self, name: &str) -> Result<Vec<AnnotationRecord>, DatasetError> {
        read_json(&self.scene_dir(name).join(ANNOTATIONS_FILE))
    }

    /// Poke and grasp plans for every annotated instance, in manifest order.
    pub fn plan(&self, gripper: &GripperSpec) -> Result<Vec<InstancePlan>, DatasetError> {
        let per_scene = self
            .manifest
            .scenes
            .par_iter()
            .map(|s| {
                let dir = self.scene_dir(&s.name);
                let (scene, buffers) = load_scene(&dir)?;
                self.annotations(&s.name)?
                    .into_iter()
                    .map(|a| {
                        let region = io::pgm_to_mask(&io::read_file(&dir.join(&a.poke_file))?)?;
                        Ok(plan_instance(&s.name, a.id, &scene, &buffers, &region, gripper))
                    })
                    .collect::<Result<Vec<_>, DatasetError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(per_scene.into_iter().flatten().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePlan {
    pub scene: String,
    pub id: u32,
    pub poke: Option<PokePlan>,
    pub grasp: Option<GraspProposal>,
    /// Why planning stopped early, if it did.
    pub error: Option<String>,
}

/// Plans from camera depth alone: the poking pixel is lifted to the world
/// with the rendered depth, standing in for the tactile contact.
pub fn plan_instance(
    scene: &str,
    id: u32,
    world: &Scene,
    buffers: &RenderBuffers,
    region: &crate::grid::Mask,
    gripper: &GripperSpec,
) -> InstancePlan {
    let mut out = InstancePlan {
        scene: scene.to_string(),
        id,
        poke: None,
        grasp: None,
        error: None,
    };
    let point = match poking_point(region) {
        Ok(p) => p,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let (u, v) = point.point_px;
    let depth = buffers.depth.get_signed(u, v).copied().unwrap_or(f64::INFINITY);
    if !depth.is_finite() {
        out.error = Some(format!("no depth at pixel ({u}, {v})"));
        return out;
    }
    let p_world = world.camera.pixel_ray(u as f64, v as f64).at(depth);
    match heuristic_grasp(&p_world, region, &point.ellipse, &world.camera, gripper) {
        Ok(g) => out.grasp = Some(g),
        Err(e) => out.error = Some(e.to_string()),
    }
    out.poke = Some(PokePlan::new(point, p_world));
    out
}
