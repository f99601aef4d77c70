//! The nine-object benchmark set and its trial placements.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::scene::{ObjectModel, Shape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub shape: Shape,
    pub wall_thickness: f64,
    pub mass: f64,
}

impl CatalogEntry {
    pub fn instantiate(&self, id: u32, pose: Pose) -> ObjectModel {
        ObjectModel {
            id,
            name: self.name.clone(),
            shape: self.shape.clone(),
            wall_thickness: self.wall_thickness,
            mass: self.mass,
            pose,
        }
    }

    /// Object with identity pose, used for local-frame queries.
    pub fn local(&self) -> ObjectModel {
        self.instantiate(1, Pose::identity())
    }
}

fn vessel(name: &str, profile: &[[f64; 2]], open: bool, wall: f64, mass: f64) -> CatalogEntry {
    CatalogEntry {
        name: name.into(),
        shape: Shape::Revolution {
            profile: profile.to_vec(),
            open_top: open,
        },
        wall_thickness: wall,
        mass,
    }
}

/// Procedural stand-ins for the nine household objects, all narrower than
/// the gripper opening.
pub fn default_catalog() -> Vec<CatalogEntry> {
    vec![
        vessel("big_disposable_cup", &[[0.028, 0.0], [0.040, 0.12]], true, 0.003, 0.012),
        vessel("highball_cup", &[[0.032, 0.0], [0.034, 0.13]], true, 0.003, 0.25),
        CatalogEntry {
            name: "rectangular_cup".into(),
            shape: Shape::Box { w: 0.06, d: 0.05, h: 0.09 },
            wall_thickness: 0.003,
            mass: 0.2,
        },
        vessel("vial", &[[0.014, 0.0], [0.014, 0.061]], true, 0.0012, 0.025),
        vessel("jar", &[[0.035, 0.0], [0.035, 0.08]], false, 0.004, 0.3),
        vessel("mug", &[[0.038, 0.0], [0.040, 0.095]], true, 0.004, 0.3),
        vessel("small_disposable_cup", &[[0.022, 0.0], [0.035, 0.09]], true, 0.003, 0.006),
        vessel("champagne_cup", &[[0.025, 0.0], [0.028, 0.05], [0.036, 0.14]], true, 0.003, 0.2),
        vessel("tumble_cup", &[[0.036, 0.0], [0.040, 0.10]], true, 0.004, 0.25),
    ]
}

/// How the object rests on the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Upright,
    UpsideDown,
    Side,
}

impl Placement {
    /// Four attempts each upright, upside down and on the side.
    pub fn for_attempt(attempt: usize) -> Self {
        match (attempt / 4) % 3 {
            0 => Self::Upright,
            1 => Self::UpsideDown,
            _ => Self::Side,
        }
    }
}

/// Pose of `entry` resting on the table in the given placement, with random
/// position within `±spread` of the origin and random yaw.
pub fn place<R: Rng>(entry: &CatalogEntry, placement: Placement, spread: f64, rng: &mut R) -> Pose {
    let local = entry.local();
    let x = rng.gen_range(-spread..=spread);
    let y = rng.gen_range(-spread..=spread);
    let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let rest = match placement {
        Placement::Upright => Pose::identity(),
        Placement::UpsideDown => Pose::from_axis_angle(
            Vector3::x(),
            std::f64::consts::PI,
            Vector3::new(0.0, 0.0, local.local_height()),
        ),
        Placement::Side => {
            let lift = match &entry.shape {
                Shape::Box { d, .. } => 0.5 * d,
                Shape::Revolution { .. } => local.local_radius(),
            };
            // Axis along world y, lowered so the widest section touches the table.
            Pose::from_axis_angle(
                Vector3::x(),
                -std::f64::consts::FRAC_PI_2,
                Vector3::new(0.0, -0.5 * local.local_height(), lift),
            )
        }
    };
    Pose::from_axis_angle(Vector3::z(), yaw, Vector3::new(x, y, 0.0)).compose(&rest)
}
