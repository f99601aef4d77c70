use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::seed::rng;
use super::{HarnessError, TrialConfig};
use crate::geometry::Pose;
use crate::plan::PokePlan;
use crate::render::{top_surface, Hit, Intersector};
use crate::scene::{ObjectModel, Scene, Shape};
use crate::tactile::{detect_contact, frame_from_heights, surface_heights, TactileFrame};

const G: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PokeStatus {
    Success,
    Miss,
    Topple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PokeOutcome {
    pub status: PokeStatus,
    /// Centroid of the contact patch; present iff the poke succeeded.
    pub contact_point: Option<Vector3<f64>>,
    pub seed: u64,
    /// Tactile image at the moment contact was detected.
    #[serde(skip)]
    pub frame: Option<TactileFrame>,
}

impl PokeOutcome {
    fn failed(status: PokeStatus, seed: u64) -> Self {
        Self {
            status,
            contact_point: None,
            seed,
            frame: None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == PokeStatus::Success
    }
}

/// Largest vertical force before the object rotates about its support edge:
/// `F·d2 = G·d1`.
pub fn tipping_max_force(g: f64, d1: f64, d2: f64) -> Result<f64, HarnessError> {
    if !(d2 > 0.0) {
        return Err(HarnessError::InvalidGeometry(d2));
    }
    Ok(g * d1 / d2)
}

/// Lever arms `(d1, d2)` about the support edge nearest to a vertical push at
/// `contact`: `d1` from the weight line to the pivot, `d2` from the pivot to
/// the push. `None` when the push cannot tip the object: it lands over the
/// support, or the object lies on its side or is a box.
pub fn lever_arms(object: &ObjectModel, contact: &Vector3<f64>) -> Option<(f64, f64)> {
    let Shape::Revolution { profile, .. } = &object.shape else {
        return None;
    };
    let axis = object.pose.transform_vector(&Vector3::z());
    let support = if axis.z > 0.99 {
        profile[0][0]
    } else if axis.z < -0.99 {
        profile[profile.len() - 1][0]
    } else {
        return None;
    };
    let base = object.pose.translation();
    let rho = (contact.x - base.x).hypot(contact.y - base.y);
    let d2 = rho - support;
    (d2 > 0.0).then_some((support, d2))
}

/// Horizontal offset of `contact` from the vertical plane through the axis
/// of a round object lying on its side; `None` for other objects.
pub fn roll_offset(object: &ObjectModel, contact: &Vector3<f64>) -> Option<f64> {
    if !matches!(object.shape, Shape::Revolution { .. }) {
        return None;
    }
    let axis = object.pose.transform_vector(&Vector3::z());
    let across = Vector3::z().cross(&axis);
    if across.norm() < 0.9 {
        return None;
    }
    Some((contact - object.pose.translation()).dot(&across.normalize()).abs())
}

/// Descends the sensor vertically over `plan.point_world` in `poke_step`
/// increments until the contact detector fires.
pub fn simulate_poke(scene: &Scene, plan: &PokePlan, cfg: &TrialConfig, seed: u64) -> PokeOutcome {
    let at = plan.point_world;
    let sensor = cfg.sensor.at(Vector3::new(at.x, at.y, 0.0));
    let heights = surface_heights(scene, &sensor);
    let mut sorted: Vec<f64> = heights.as_slice().iter().copied().filter(|h| h.is_finite()).collect();
    let needed = cfg.contact.count_threshold + 1;
    if sorted.len() < needed || cfg.sensor.max_indent <= cfg.contact.value_threshold {
        return PokeOutcome::failed(PokeStatus::Miss, seed);
    }
    sorted.sort_by(|a, b| b.total_cmp(a));
    let start = sorted[0] + 0.002;
    // The detector fires once `needed` sensels are pressed deeper than the
    // value threshold, i.e. when the surface drops below this level.
    let level = sorted[needed - 1] - cfg.contact.value_threshold;
    let z_at = |k: u64| start - k as f64 * cfg.poke_step;
    // Same arithmetic as the frame and the detector, so the analytic step
    // estimate is only refined across rounding at the boundary.
    let fires = |k: u64| {
        let z = z_at(k);
        heights
            .as_slice()
            .iter()
            .filter(|&&h| (h - z).clamp(0.0, cfg.sensor.max_indent) > cfg.contact.value_threshold)
            .count()
            > cfg.contact.count_threshold
    };
    let mut k = ((start - level) / cfg.poke_step).floor().max(0.0) as u64;
    while k > 0 && fires(k - 1) {
        k -= 1;
    }
    while !fires(k) {
        if z_at(k) < cfg.h_stop {
            return PokeOutcome::failed(PokeStatus::Miss, seed);
        }
        k += 1;
    }
    let z = z_at(k);
    if z < cfg.h_stop {
        return PokeOutcome::failed(PokeStatus::Miss, seed);
    }

    let reference = frame_from_heights(&heights, &sensor, start, 0);
    let frame = frame_from_heights(&heights, &sensor, z, k);
    match detect_contact(&reference, &frame, cfg.contact.value_threshold, cfg.contact.count_threshold) {
        Ok((true, _)) => {}
        _ => return PokeOutcome::failed(PokeStatus::Miss, seed),
    }

    let pressed: Vec<(usize, usize)> = frame
        .image
        .iter_xy()
        .filter(|(_, _, &v)| v > cfg.contact.value_threshold)
        .map(|(i, j, _)| (i, j))
        .collect();
    let n = pressed.len() as f64;
    let contact = pressed.iter().fold(Vector3::zeros(), |acc, &(i, j)| {
        let p = sensor.sensel_world(i as f64, j as f64);
        acc + Vector3::new(p.x, p.y, *heights.get(i, j))
    }) / n;

    let hitters: Vec<Intersector<'_>> = scene.objects.iter().map(Intersector::new).collect();
    let hits: Vec<(Hit, u32)> = pressed
        .iter()
        .filter_map(|&(i, j)| {
            let p = sensor.sensel_world(i as f64, j as f64);
            top_surface(&hitters, p.x, p.y, heights.get(i, j) + 1e-3).map(|(_, hit, id)| (hit, id))
        })
        .collect();
    if slips(&hits, cfg) || topples(scene, &hits, &contact, cfg) {
        return PokeOutcome::failed(PokeStatus::Topple, seed);
    }
    PokeOutcome {
        status: PokeStatus::Success,
        contact_point: Some(contact),
        seed,
        frame: Some(frame),
    }
}

/// A gel pressing on a steep surface pushes the object sideways instead of
/// stopping on it.
fn slips(hits: &[(Hit, u32)], cfg: &TrialConfig) -> bool {
    if hits.is_empty() {
        return false;
    }
    let tilt: f64 = hits.iter().map(|(h, _)| h.normal.z.clamp(-1.0, 1.0).acos()).sum();
    (tilt / hits.len() as f64).to_degrees() > cfg.max_contact_tilt_deg
}

fn topples(scene: &Scene, hits: &[(Hit, u32)], contact: &Vector3<f64>, cfg: &TrialConfig) -> bool {
    let Some(object) = hits.first().and_then(|&(_, id)| scene.object(id)) else {
        return false;
    };
    if roll_offset(object, contact).is_some_and(|d| d > cfg.roll_tolerance) {
        return true;
    }
    match lever_arms(object, contact) {
        Some((d1, d2)) => tipping_max_force(object.mass * G, d1, d2).is_ok_and(|f| f < cfg.f_stop),
        None => false,
    }
}

/// Camera→robot perturbation: a uniform offset in `[−range, range]` along
/// world x. Identity when the range is zero.
pub fn inject_calibration_error(cfg: &TrialConfig, seed: u64) -> Pose {
    if cfg.calib_range == 0.0 {
        return Pose::identity();
    }
    let dx = rng(seed).gen_range(-cfg.calib_range..=cfg.calib_range);
    Pose::from_translation(Vector3::new(dx, 0.0, 0.0))
}
