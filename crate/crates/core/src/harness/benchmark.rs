use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::{place, CatalogEntry, Placement};
use super::grasp::{simulate_grasp, FailureReason, GraspOutcome};
use super::poke::{inject_calibration_error, simulate_poke, PokeOutcome, PokeStatus};
use super::seed::{mix, rng, ADHESION_STREAM, CALIBRATION_STREAM, DEPTH_NOISE_STREAM, PLACEMENT_STREAM};
use super::{Guidance, HarnessError, Localization, TrialConfig};
use crate::geometry::Pose;
use crate::grid::{Grid, Mask};
use crate::imgeo::{find_external_contour, fit_ellipse, nearest_positive, Ellipse};
use crate::plan::{
    centroid_in_region, grasp_from_inputs, grasp_inputs, poking_point, round_pixel, PokePlan, PokePoint,
    RegionTopology,
};
use crate::pokegt::{poking_regions, InstanceAnnotation};
use crate::render::{intersect_table, render, RenderBuffers};
use crate::scene::{CameraModel, Scene, Shape};
use crate::tactile::tactile_align;

/// Id given to the single object of a trial scene.
const OBJECT_ID: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub object: String,
    pub object_index: usize,
    pub mode: Guidance,
    pub attempt: usize,
    pub placement: Placement,
    pub seed: u64,
    /// Injected camera→robot offset along world x.
    pub calibration_dx: f64,
    pub poke: PokeOutcome,
    pub tactile_grasp: GraspOutcome,
    pub camera_grasp: GraspOutcome,
}

impl TrialRecord {
    pub fn grasp(&self, loc: Localization) -> &GraspOutcome {
        match loc {
            Localization::Camera => &self.camera_grasp,
            Localization::Tactile => &self.tactile_grasp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub object: String,
    pub mode: String,
    pub successes: usize,
    pub attempts: usize,
    pub rate: f64,
}

impl RateRow {
    fn new(object: &str, mode: &str, successes: usize, attempts: usize) -> Self {
        Self {
            object: object.to_string(),
            mode: mode.to_string(),
            successes,
            attempts,
            rate: successes as f64 / attempts as f64,
        }
    }
}

/// CSV with columns `object,mode,successes,attempts,rate`.
pub fn rates_csv(rows: &[RateRow]) -> String {
    let mut out = String::from("object,mode,successes,attempts,rate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            r.object, r.mode, r.successes, r.attempts, r.rate
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub trials: Vec<TrialRecord>,
    /// Per object × guidance mode, followed by one `all` row per mode.
    pub poke_rates: Vec<RateRow>,
    /// As `poke_rates`, with modes named `<guidance>-<localization>`.
    pub grasp_rates: Vec<RateRow>,
}

impl BenchmarkResult {
    fn aggregate(rows: &[RateRow], mode: &str) -> Option<f64> {
        rows.iter().find(|r| r.object == "all" && r.mode == mode).map(|r| r.rate)
    }

    pub fn poke_rate(&self, mode: Guidance) -> Option<f64> {
        Self::aggregate(&self.poke_rates, mode.name())
    }

    pub fn grasp_rate(&self, mode: Guidance, loc: Localization) -> Option<f64> {
        Self::aggregate(&self.grasp_rates, &grasp_mode_name(mode, loc))
    }
}

fn grasp_mode_name(mode: Guidance, loc: Localization) -> String {
    format!("{}-{}", mode.name(), loc.name())
}

/// Single-object scene for one attempt. The placement draw is shared by
/// every guidance mode.
pub fn trial_scene(
    entry: &CatalogEntry,
    object_index: usize,
    attempt: usize,
    placement: Placement,
    camera: &CameraModel,
    cfg: &TrialConfig,
) -> Scene {
    let seed = mix(cfg.master_seed, object_index as u64, PLACEMENT_STREAM, attempt as u64);
    let pose = place(entry, placement, cfg.placement_spread, &mut rng(seed));
    Scene::new(*camera, vec![entry.instantiate(OBJECT_ID, pose)])
}

/// Rendered trial scene with its annotation.
struct Prepared {
    scene: Scene,
    buffers: RenderBuffers,
    annotation: Option<InstanceAnnotation>,
    placement: Placement,
    calibration: Pose,
}

fn prepare(
    entry: &CatalogEntry,
    object_index: usize,
    attempt: usize,
    placement: Placement,
    camera: &CameraModel,
    cfg: &TrialConfig,
) -> Prepared {
    let scene = trial_scene(entry, object_index, attempt, placement, camera, cfg);
    let buffers = render(&scene);
    let annotation = poking_regions(&buffers, &scene.table, &cfg.region)
        .ok()
        .and_then(|a| a.into_iter().find(|a| a.id == OBJECT_ID));
    let calib_seed = mix(cfg.master_seed, object_index as u64, CALIBRATION_STREAM, attempt as u64);
    Prepared {
        scene,
        buffers,
        annotation,
        placement,
        calibration: inject_calibration_error(cfg, calib_seed),
    }
}

/// Image-space guidance: the aimed pixel, the region grasps are planned on
/// and its fitted ellipse.
struct Guide {
    point: PokePoint,
    region: Mask,
}

fn fitted(region: &Mask) -> Option<Ellipse> {
    fit_ellipse(&find_external_contour(region).ok()?).ok()
}

fn topology(region: &Mask, ellipse: &Ellipse) -> RegionTopology {
    if centroid_in_region(region, ellipse) {
        RegionTopology::SimplyConnected
    } else {
        RegionTopology::Ring
    }
}

fn guide(ann: &InstanceAnnotation, mode: Guidance) -> Option<Guide> {
    let centred = |region: Mask, pixel: (f64, f64)| {
        let ellipse = fitted(&region)?;
        Some(Guide {
            point: PokePoint {
                point_px: round_pixel(pixel),
                ellipse,
                region_topology: topology(&region, &ellipse),
            },
            region,
        })
    };
    match mode {
        Guidance::BBox => {
            let (u0, v0, u1, v1) = ann.bbox;
            let rect = Grid::from_fn(ann.mask.width(), ann.mask.height(), |x, y| {
                (u0..=u1).contains(&x) && (v0..=v1).contains(&y)
            });
            centred(rect, (0.5 * (u0 + u1) as f64, 0.5 * (v0 + v1) as f64))
        }
        Guidance::Mask => centred(ann.mask.clone(), ann.mask.centroid()?),
        Guidance::PokingRegion => {
            let region = ann.poking_region.clone();
            if region.is_empty_mask() {
                return None;
            }
            let point = match poking_point(&region) {
                Ok(p) => p,
                // Too few contour points for a conic: aim at the pixel
                // nearest the region centroid, keep the mask's ellipse for
                // grasp orientation.
                Err(_) => {
                    let ellipse = fitted(&ann.mask)?;
                    PokePoint {
                        point_px: nearest_positive(&region, region.centroid()?).ok()?,
                        ellipse,
                        region_topology: topology(&region, &ellipse),
                    }
                }
            };
            Some(Guide { point, region })
        }
    }
}

fn believed_camera(camera: &CameraModel, calibration: &Pose) -> CameraModel {
    CameraModel {
        pose: calibration.compose(&camera.pose),
        ..*camera
    }
}

fn pixel_depth(buffers: &RenderBuffers, px: (i64, i64)) -> Option<f64> {
    let d = *buffers.depth.get_signed(px.0, px.1)?;
    d.is_finite().then_some(d)
}

/// Robot-frame point the system believes lies at the rendered surface
/// under `px`.
fn believed_point(prep: &Prepared, px: (i64, i64)) -> Option<Vector3<f64>> {
    let d = pixel_depth(&prep.buffers, px)?;
    let ray = prep.buffers.camera.pixel_ray(px.0 as f64, px.1 as f64);
    Some(prep.calibration.transform_point(&ray.at(d)))
}

fn tactile_grasp(prep: &Prepared, guide: &Guide, poke: &PokeOutcome, cfg: &TrialConfig, seed: u64) -> GraspOutcome {
    let fail = |r| GraspOutcome::failure(r, None, seed);
    let (Some(p_t), Some(frame)) = (poke.contact_point, poke.frame.as_ref()) else {
        return fail(FailureReason::NoLocalization);
    };
    let lying_round = prep.placement == Placement::Side
        && matches!(prep.scene.objects[0].shape, Shape::Revolution { .. });
    if lying_round && rng(mix(seed, ADHESION_STREAM, 0, 0)).gen_bool(cfg.adhesion_p) {
        return fail(FailureReason::Adhesion);
    }
    let camera = believed_camera(&prep.buffers.camera, &prep.calibration);
    let Ok(mut inputs) = grasp_inputs(&p_t, &guide.region, &guide.point.ellipse, &camera) else {
        return fail(FailureReason::Planning);
    };
    if cfg.tactile_align && !inputs.centroid_in_region {
        if let Ok(c) = tactile_align(frame, &cfg.sensor) {
            inputs.centroid_world.x = c.x;
            inputs.centroid_world.y = c.y;
        }
    }
    match grasp_from_inputs(&inputs, &cfg.gripper) {
        Ok(g) => simulate_grasp(&prep.scene, &g, cfg, seed),
        Err(_) => fail(FailureReason::Planning),
    }
}

/// Camera-only localization: the depth reading at the guidance pixel, which
/// inside a transparent mask either passes through to the table or carries
/// Gaussian range noise.
fn camera_grasp(prep: &Prepared, guide: &Guide, cfg: &TrialConfig, seed: u64) -> GraspOutcome {
    let fail = |r| GraspOutcome::failure(r, None, seed);
    let px = guide.point.point_px;
    let Some(d) = pixel_depth(&prep.buffers, px) else {
        return fail(FailureReason::NoLocalization);
    };
    let ray = prep.buffers.camera.pixel_ray(px.0 as f64, px.1 as f64);
    let mut r = rng(mix(seed, DEPTH_NOISE_STREAM, 0, 0));
    let transparent = prep.buffers.instance_mask(OBJECT_ID).is_set(px.0, px.1);
    let range = if transparent && r.gen_bool(cfg.depth_noise.dropout_p) {
        match intersect_table(&prep.scene.table, &ray) {
            Some(t) => t,
            None => return fail(FailureReason::NoLocalization),
        }
    } else if transparent && cfg.depth_noise.sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.depth_noise.sigma).expect("sigma is positive");
        d + noise.sample(&mut r)
    } else {
        d
    };
    let p = prep.calibration.transform_point(&ray.at(range));
    let camera = believed_camera(&prep.buffers.camera, &prep.calibration);
    let proposal = grasp_inputs(&p, &guide.region, &guide.point.ellipse, &camera)
        .and_then(|i| grasp_from_inputs(&i, &cfg.gripper));
    match proposal {
        Ok(g) => simulate_grasp(&prep.scene, &g, cfg, seed),
        Err(_) => fail(FailureReason::Planning),
    }
}

fn trial_on(
    prep: &Prepared,
    entry: &CatalogEntry,
    object_index: usize,
    attempt: usize,
    mode: Guidance,
    cfg: &TrialConfig,
) -> TrialRecord {
    let seed = mix(cfg.master_seed, object_index as u64, mode.index(), attempt as u64);
    let guide = prep.annotation.as_ref().and_then(|a| guide(a, mode));
    let missed = || PokeOutcome {
        status: PokeStatus::Miss,
        contact_point: None,
        seed,
        frame: None,
    };
    let no_grasp = || GraspOutcome::failure(FailureReason::NoLocalization, None, seed);
    let (poke, tactile, camera) = match &guide {
        None => (missed(), no_grasp(), no_grasp()),
        Some(g) => {
            let poke = match believed_point(prep, g.point.point_px) {
                Some(p) => simulate_poke(&prep.scene, &PokePlan::new(g.point, p), cfg, seed),
                None => missed(),
            };
            let tactile = tactile_grasp(prep, g, &poke, cfg, seed);
            (poke, tactile, camera_grasp(prep, g, cfg, seed))
        }
    };
    TrialRecord {
        object: entry.name.clone(),
        object_index,
        mode,
        attempt,
        placement: prep.placement,
        seed,
        calibration_dx: prep.calibration.translation().x,
        poke,
        tactile_grasp: tactile,
        camera_grasp: camera,
    }
}

/// One attempt on one object with one guidance mode.
pub fn run_trial(
    entry: &CatalogEntry,
    object_index: usize,
    attempt: usize,
    mode: Guidance,
    camera: &CameraModel,
    cfg: &TrialConfig,
) -> TrialRecord {
    let prep = prepare(entry, object_index, attempt, Placement::for_attempt(attempt), camera, cfg);
    trial_on(&prep, entry, object_index, attempt, mode, cfg)
}

/// Every object × attempt × mode. Attempts cycle through upright, upside
/// down and side-lying placements in blocks of four.
pub fn run_benchmark(
    catalog: &[CatalogEntry],
    camera: &CameraModel,
    modes: &[Guidance],
    attempts_per_object: usize,
    cfg: &TrialConfig,
) -> Result<BenchmarkResult, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..catalog.len())
        .flat_map(|o| (0..attempts_per_object).map(move |a| (o, a)))
        .collect();
    let per_job: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(o, a)| {
            let prep = prepare(&catalog[o], o, a, Placement::for_attempt(a), camera, cfg);
            modes.iter().map(|&m| trial_on(&prep, &catalog[o], o, a, m, cfg)).collect()
        })
        .collect();
    let trials: Vec<TrialRecord> = per_job.into_iter().flatten().collect();

    let mut poke_rates = Vec::new();
    let mut grasp_rates = Vec::new();
    if attempts_per_object > 0 {
        let count = |f: &dyn Fn(&TrialRecord) -> bool, obj: Option<usize>, mode: Guidance| {
            trials
                .iter()
                .filter(|t| t.mode == mode && obj.is_none_or(|o| t.object_index == o))
                .filter(|t| f(t))
                .count()
        };
        for obj in catalog.iter().enumerate().map(|(i, e)| (Some(i), e.name.as_str())).chain([(None, "all")]) {
            let n = obj.0.map_or(catalog.len(), |_| 1) * attempts_per_object;
            for &mode in modes {
                let s = count(&|t| t.poke.is_success(), obj.0, mode);
                poke_rates.push(RateRow::new(obj.1, mode.name(), s, n));
                for loc in [Localization::Tactile, Localization::Camera] {
                    let s = count(&|t| t.grasp(loc).is_success(), obj.0, mode);
                    grasp_rates.push(RateRow::new(obj.1, &grasp_mode_name(mode, loc), s, n));
                }
            }
        }
    }
    Ok(BenchmarkResult {
        trials,
        poke_rates,
        grasp_rates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub trials: usize,
    pub success_off: usize,
    pub success_on: usize,
    /// Horizontal distance between the aligned centre and the true rim
    /// centre; `None` when the poke or the alignment failed.
    pub recovery_errors: Vec<Option<f64>>,
}

impl AlignmentReport {
    pub fn rate_off(&self) -> f64 {
        self.success_off as f64 / self.trials as f64
    }

    pub fn rate_on(&self) -> f64 {
        self.success_on as f64 / self.trials as f64
    }

    /// Trials whose recovered centre lies within `tol` of the truth.
    pub fn recovered_within(&self, tol: f64) -> usize {
        self.recovery_errors.iter().flatten().filter(|&&e| e < tol).count()
    }
}

/// Upright `entry` under calibration error, grasped with poking-region
/// guidance and tactile localization, with and without tactile alignment.
pub fn alignment_experiment(
    entry: &CatalogEntry,
    object_index: usize,
    camera: &CameraModel,
    trials: usize,
    cfg: &TrialConfig,
) -> Result<AlignmentReport, HarnessError> {
    cfg.validate()?;
    let off = TrialConfig {
        tactile_align: false,
        ..*cfg
    };
    let on = TrialConfig {
        tactile_align: true,
        ..*cfg
    };
    let results: Vec<(bool, bool, Option<f64>)> = (0..trials)
        .into_par_iter()
        .map(|a| {
            let prep = prepare(entry, object_index, a, Placement::Upright, camera, cfg);
            let r_off = trial_on(&prep, entry, object_index, a, Guidance::PokingRegion, &off);
            let r_on = trial_on(&prep, entry, object_index, a, Guidance::PokingRegion, &on);
            let truth = prep.scene.objects[0].pose.translation();
            let err = r_on
                .poke
                .frame
                .as_ref()
                .and_then(|f| tactile_align(f, &cfg.sensor).ok())
                .map(|c| (c.x - truth.x).hypot(c.y - truth.y));
            (r_off.tactile_grasp.is_success(), r_on.tactile_grasp.is_success(), err)
        })
        .collect();
    Ok(AlignmentReport {
        trials,
        success_off: results.iter().filter(|r| r.0).count(),
        success_on: results.iter().filter(|r| r.1).count(),
        recovery_errors: results.into_iter().map(|r| r.2).collect(),
    })
}
