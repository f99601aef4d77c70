//! Poking-point generation and heuristic top-down grasp generation.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::wrap_half_turn;
use crate::grid::Mask;
use crate::imgeo::{find_external_contour, fit_ellipse, nearest_positive, Ellipse, ImgeoError};
use crate::scene::{backproject_at_height, CameraModel, SceneError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Image(#[from] ImgeoError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("edge grasp needs width {required:.4} m but the gripper opens to {max:.4} m")]
    WidthOverflow { required: f64, max: f64 },
    #[error("invalid gripper: {0}")]
    InvalidGripper(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperSpec {
    pub maximum_gripper_width: f64,
    pub finger_width: f64,
}

impl Default for GripperSpec {
    fn default() -> Self {
        Self {
            maximum_gripper_width: 0.085,
            finger_width: 0.020,
        }
    }
}

impl GripperSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        let ok = self.finger_width > 0.0
            && self.maximum_gripper_width > 0.0
            && self.finger_width < self.maximum_gripper_width;
        if ok {
            Ok(())
        } else {
            Err(PlanError::InvalidGripper(format!(
                "need 0 < finger_width < maximum_gripper_width, got {} and {}",
                self.finger_width, self.maximum_gripper_width
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTopology {
    SimplyConnected,
    Ring,
}

/// Image-space part of a poke plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PokePoint {
    pub point_px: (i64, i64),
    pub ellipse: Ellipse,
    pub region_topology: RegionTopology,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PokePlan {
    pub point_px: (i64, i64),
    pub point_world: Vector3<f64>,
    pub ellipse: Ellipse,
    pub region_topology: RegionTopology,
}

impl PokePlan {
    pub fn new(point: PokePoint, point_world: Vector3<f64>) -> Self {
        Self {
            point_px: point.point_px,
            point_world,
            ellipse: point.ellipse,
            region_topology: point.region_topology,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspKind {
    Centroid,
    Edge,
}

/// Top-down parallel-jaw grasp. `theta` is the world bearing of the closing
/// direction, in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspProposal {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub theta: f64,
    pub kind: GraspKind,
}

impl GraspProposal {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// Unit closing direction in the table plane.
    pub fn closing_direction(&self) -> Vector3<f64> {
        Vector3::new(self.theta.cos(), self.theta.sin(), 0.0)
    }
}

/// Pixel nearest to the real-valued `p`.
pub fn round_pixel(p: (f64, f64)) -> (i64, i64) {
    (p.0.round() as i64, p.1.round() as i64)
}

pub fn centroid_in_region(region: &Mask, ellipse: &Ellipse) -> bool {
    let (u, v) = round_pixel(ellipse.centroid);
    region.is_set(u, v)
}

/// Fits the region's outer contour with an ellipse and picks the poking pixel.
pub fn poking_point(region: &Mask) -> Result<PokePoint, PlanError> {
    let contour = find_external_contour(region)?;
    let ellipse = fit_ellipse(&contour)?;
    Ok(if centroid_in_region(region, &ellipse) {
        PokePoint {
            point_px: round_pixel(ellipse.centroid),
            ellipse,
            region_topology: RegionTopology::SimplyConnected,
        }
    } else {
        PokePoint {
            point_px: nearest_positive(region, ellipse.centroid)?,
            ellipse,
            region_topology: RegionTopology::Ring,
        }
    })
}

/// World bearing in `[0, π)` of the image direction `angle` through `pixel`,
/// taken in the horizontal plane at `height`.
pub fn image_angle_to_world(
    camera: &CameraModel,
    pixel: (f64, f64),
    angle: f64,
    height: f64,
) -> Result<f64, SceneError> {
    let p0 = backproject_at_height(camera, pixel, height)?;
    let p1 = backproject_at_height(
        camera,
        (pixel.0 + angle.cos(), pixel.1 + angle.sin()),
        height,
    )?;
    Ok(wrap_half_turn((p1.y - p0.y).atan2(p1.x - p0.x)))
}

/// The branch predicate of the ring case.
pub fn takes_edge_branch(distance: f64, gripper: &GripperSpec) -> bool {
    distance > 0.5 * gripper.finger_width
}

/// World-frame quantities the grasp rule needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspInputs {
    pub poke_world: Vector3<f64>,
    /// Region centre at the poke height; equal to `poke_world` when the
    /// centre lies inside the region.
    pub centroid_world: Vector3<f64>,
    pub centroid_in_region: bool,
    /// World bearing of the ellipse's short axis.
    pub short_axis_bearing: f64,
}

pub fn grasp_inputs(
    poke_world: &Vector3<f64>,
    region: &Mask,
    ellipse: &Ellipse,
    camera: &CameraModel,
) -> Result<GraspInputs, PlanError> {
    let z = poke_world.z;
    let inside = centroid_in_region(region, ellipse);
    Ok(GraspInputs {
        poke_world: *poke_world,
        centroid_world: if inside {
            *poke_world
        } else {
            backproject_at_height(camera, ellipse.centroid, z)?
        },
        centroid_in_region: inside,
        short_axis_bearing: image_angle_to_world(camera, ellipse.centroid, ellipse.minor_axis_angle(), z)?,
    })
}

pub fn grasp_from_inputs(inputs: &GraspInputs, gripper: &GripperSpec) -> Result<GraspProposal, PlanError> {
    gripper.validate()?;
    let p_t = inputs.poke_world;
    let centroid_grasp = |at: Vector3<f64>| GraspProposal {
        x: at.x,
        y: at.y,
        z: p_t.z,
        w: gripper.maximum_gripper_width,
        theta: inputs.short_axis_bearing,
        kind: GraspKind::Centroid,
    };
    if inputs.centroid_in_region {
        return Ok(centroid_grasp(p_t));
    }
    let p_c = inputs.centroid_world;
    let (dx, dy) = (p_t.x - p_c.x, p_t.y - p_c.y);
    let d = dx.hypot(dy);
    if !takes_edge_branch(d, gripper) {
        return Ok(centroid_grasp(p_c));
    }
    let w = 2.0 * d;
    if w > gripper.maximum_gripper_width {
        return Err(PlanError::WidthOverflow {
            required: w,
            max: gripper.maximum_gripper_width,
        });
    }
    Ok(GraspProposal {
        x: p_t.x,
        y: p_t.y,
        z: p_t.z,
        w,
        theta: wrap_half_turn(dy.atan2(dx)),
        kind: GraspKind::Edge,
    })
}

/// Grasp proposal from the poke contact and the fitted region ellipse.
/// Centroid grasps close along the ellipse's short axis.
pub fn heuristic_grasp(
    poke_world: &Vector3<f64>,
    region: &Mask,
    ellipse: &Ellipse,
    camera: &CameraModel,
    gripper: &GripperSpec,
) -> Result<GraspProposal, PlanError> {
    grasp_from_inputs(&grasp_inputs(poke_world, region, ellipse, camera)?, gripper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{half_turn_distance, Pose};

    fn overhead() -> CameraModel {
        let pose = Pose::look_at(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros(), Vector3::y()).unwrap();
        CameraModel::with_intrinsics(100, 100, 1000.0, 1000.0, 50.0, 50.0, pose)
    }

    #[test]
    fn disk_pokes_its_centre() {
        let m = Mask::disk(100, 100, 50.0, 50.0, 12.0);
        let p = poking_point(&m).unwrap();
        assert_eq!(p.point_px, (50, 50));
        assert_eq!(p.region_topology, RegionTopology::SimplyConnected);
    }

    #[test]
    fn annulus_pokes_inner_rim() {
        let m = Mask::annulus(100, 100, 50.0, 50.0, 8.0, 11.0);
        let p = poking_point(&m).unwrap();
        assert_eq!(p.region_topology, RegionTopology::Ring);
        assert_eq!(p.point_px, nearest_positive(&m, p.ellipse.centroid).unwrap());
        let d = (((p.point_px.0 - 50).pow(2) + (p.point_px.1 - 50).pow(2)) as f64).sqrt();
        assert!((d - 8.0).abs() < 1e-12);
        assert!(matches!(
            poking_point(&Mask::filled(10, 10, false)),
            Err(PlanError::Image(ImgeoError::EmptyMask))
        ));
    }

    #[test]
    fn poking_point_follows_translation() {
        let m = Mask::annulus(100, 100, 40.0, 45.0, 6.0, 9.0);
        let a = poking_point(&m).unwrap();
        let b = poking_point(&m.shifted(7, -3)).unwrap();
        assert_eq!((a.point_px.0 + 7, a.point_px.1 - 3), b.point_px);
    }

    #[test]
    fn simply_connected_gives_centroid_grasp() {
        let cam = overhead();
        let m = Mask::disk(100, 100, 50.0, 50.0, 10.0);
        let p = poking_point(&m).unwrap();
        let poke = Vector3::new(0.0, 0.0, 0.05);
        let g = heuristic_grasp(&poke, &m, &p.ellipse, &cam, &GripperSpec::default()).unwrap();
        assert_eq!(g.kind, GraspKind::Centroid);
        assert_eq!(g.w, 0.085);
        assert_eq!(g.center(), poke);
    }

    #[test]
    fn elongated_region_closes_across_short_axis() {
        let cam = overhead();
        // Long along image u, which is world x for this camera.
        let m = crate::grid::Grid::from_fn(100, 100, |x, y| (30..70).contains(&x) && (45..55).contains(&y));
        let p = poking_point(&m).unwrap();
        let g = heuristic_grasp(&Vector3::new(0.0, 0.0, 0.1), &m, &p.ellipse, &cam, &GripperSpec::default()).unwrap();
        assert!(half_turn_distance(g.theta, std::f64::consts::FRAC_PI_2) < 1e-9);
    }

    #[test]
    fn ring_branches_on_distance() {
        let cam = overhead();
        let gripper = GripperSpec::default();
        let m = Mask::annulus(100, 100, 50.0, 50.0, 8.0, 11.0);
        let ellipse = poking_point(&m).unwrap().ellipse;
        let z = 0.1;
        let p_c = backproject_at_height(&cam, ellipse.centroid, z).unwrap();
        let dir = Vector3::new(0.6, 0.8, 0.0);

        let edge = heuristic_grasp(&(p_c + dir * 0.020), &m, &ellipse, &cam, &gripper).unwrap();
        assert_eq!(edge.kind, GraspKind::Edge);
        assert!((edge.w - 0.040).abs() < 1e-12);
        assert!(half_turn_distance(edge.theta, 0.8f64.atan2(0.6)) < 1e-9);

        let near = heuristic_grasp(&(p_c + dir * 0.005), &m, &ellipse, &cam, &gripper).unwrap();
        assert_eq!(near.kind, GraspKind::Centroid);
        assert!((near.center() - p_c).norm() < 1e-12);
        assert_eq!(near.w, gripper.maximum_gripper_width);

        let above = heuristic_grasp(&(p_c + dir * (0.010 + 1e-9)), &m, &ellipse, &cam, &gripper).unwrap();
        let below = heuristic_grasp(&(p_c + dir * (0.010 - 1e-9)), &m, &ellipse, &cam, &gripper).unwrap();
        assert_eq!(above.kind, GraspKind::Edge);
        assert_eq!(below.kind, GraspKind::Centroid);
        assert!(!takes_edge_branch(0.5 * gripper.finger_width, &gripper));

        let far = heuristic_grasp(&(p_c + dir * 0.05), &m, &ellipse, &cam, &gripper);
        assert!(matches!(far, Err(PlanError::WidthOverflow { .. })));
    }
}
