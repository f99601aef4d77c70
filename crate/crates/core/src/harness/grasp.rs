use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::TrialConfig;
use crate::geometry::Ray;
use crate::plan::GraspProposal;
use crate::render::{top_surface, Intersector};
use crate::scene::Scene;

/// Samples across each finger pad for the descent collision check.
const PAD_SAMPLES: usize = 21;
/// Squeeze depth over which a finger pad conforms to the object.
const PAD_COMPLIANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// No usable poke or depth reading to plan from.
    NoLocalization,
    /// The grasp rule rejected its inputs.
    Planning,
    /// Closing height at or below the table.
    BelowTable,
    /// A finger pad lands on the object while descending.
    Collision,
    /// The closing fingers do not meet a wall from both sides.
    NoContact,
    /// The fingers meet the object too far from the grasp centre.
    OffCentre,
    /// The object was disturbed when the sensor retracted.
    Adhesion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub status: GraspStatus,
    pub reason: Option<FailureReason>,
    pub proposal: Option<GraspProposal>,
    pub seed: u64,
}

impl GraspOutcome {
    pub fn failure(reason: FailureReason, proposal: Option<GraspProposal>, seed: u64) -> Self {
        Self {
            status: GraspStatus::Failure,
            reason: Some(reason),
            proposal,
            seed,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == GraspStatus::Success
    }
}

/// Geometric top-down grasp check. The fingers descend to
/// `grasp.z − descent_offset` at `±w/2` along the closing direction, then
/// close horizontally.
pub fn simulate_grasp(scene: &Scene, grasp: &GraspProposal, cfg: &TrialConfig, seed: u64) -> GraspOutcome {
    let fail = |r| GraspOutcome::failure(r, Some(*grasp), seed);
    let z_g = grasp.z - cfg.descent_offset;
    if !(z_g > 0.0) {
        return fail(FailureReason::BelowTable);
    }
    let hitters: Vec<Intersector<'_>> = scene.objects.iter().map(Intersector::new).collect();
    let z_start = scene
        .objects
        .iter()
        .map(|o| {
            let (c, r) = o.bounding_sphere();
            c.z + r
        })
        .fold(z_g, f64::max)
        + 0.01;
    let e = grasp.closing_direction();
    let across = Vector3::new(-e.y, e.x, 0.0);
    let c = Vector3::new(grasp.x, grasp.y, z_g);
    let half = 0.5 * grasp.w;
    let fw = cfg.gripper.finger_width;

    for side in [-1.0, 1.0] {
        let pad = c + side * half * e;
        for s in 0..PAD_SAMPLES {
            let p = pad + (s as f64 / (PAD_SAMPLES - 1) as f64 - 0.5) * fw * across;
            if let Some((z, _, _)) = top_surface(&hitters, p.x, p.y, z_start) {
                if z > z_g {
                    return fail(FailureReason::Collision);
                }
            }
        }
    }

    // Contact of each pad while closing: rays spread across the pad width,
    // averaged over those within the pad compliance of the first touch.
    let pad_contact = |centre: Vector3<f64>, dir: Vector3<f64>| {
        let touches: Vec<(f64, Vector3<f64>)> = (0..PAD_SAMPLES)
            .filter_map(|s| {
                let o = centre + (s as f64 / (PAD_SAMPLES - 1) as f64 - 0.5) * fw * across;
                let ray = Ray::new(o, dir);
                hitters
                    .iter()
                    .filter_map(|h| h.intersect(&ray).map(|hit| hit.t))
                    .reduce(f64::min)
                    .map(|t| (t, ray.at(t)))
            })
            .collect();
        let t_min = touches.iter().map(|p| p.0).reduce(f64::min)?;
        let near: Vec<Vector3<f64>> = touches
            .iter()
            .filter(|p| p.0 <= t_min + PAD_COMPLIANCE)
            .map(|p| p.1)
            .collect();
        Some((t_min, near.iter().sum::<Vector3<f64>>() / near.len() as f64))
    };
    let (Some((t1, p1)), Some((t2, p2))) = (pad_contact(c - half * e, e), pad_contact(c + half * e, -e)) else {
        return fail(FailureReason::NoContact);
    };
    if t1 + t2 >= grasp.w {
        return fail(FailureReason::NoContact);
    }
    let mid = 0.5 * (p1 + p2);
    // A first touch at the very end of the pad lands exactly on the limit and
    // counts as off-centre.
    if (mid - c).xy().norm() >= 0.5 * fw - 1e-9 {
        return fail(FailureReason::OffCentre);
    }
    GraspOutcome {
        status: GraspStatus::Success,
        reason: None,
        proposal: Some(*grasp),
        seed,
    }
}
