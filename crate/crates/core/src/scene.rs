//! Scene description: table, pin-hole camera and posed parametric objects.
//!
//! The world frame is the table frame. The table is the plane
//! `table_normal · p = table_height`, by default `z = 0` with `+z` up.
//! Camera frames follow the usual vision convention: `+x` right, `+y` down
//! in the image, `+z` along the optical axis.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Ray};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("point is behind the camera (camera-frame z = {0})")]
    PointBehindCamera(f64),
    #[error("pixel ray is parallel to the plane z = {0}")]
    RayParallelToPlane(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid object {id}: {reason}")]
    InvalidObject { id: u32, reason: String },
    #[error("duplicate object id {0}")]
    DuplicateId(u32),
    #[error("table normal must be unit length, got norm {0}")]
    InvalidTableNormal(f64),
    #[error("malformed scene file: {0}")]
    Malformed(String),
}

/// Pin-hole camera with a camera→world pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
}

impl Default for CameraModel {
    /// 640×480, f = 600 px, looking at the origin from 0.65 m away with a
    /// moderate downward tilt.
    fn default() -> Self {
        Self::with_intrinsics(640, 480, 600.0, 600.0, 320.0, 240.0, default_camera_pose())
    }
}

pub fn default_camera_pose() -> Pose {
    Pose::look_at(
        Vector3::new(0.0, -0.25, 0.60),
        Vector3::zeros(),
        Vector3::z(),
    )
    .expect("default camera pose is well defined")
}

impl CameraModel {
    pub fn with_intrinsics(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        pose: Pose,
    ) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        }
    }

    /// Same field of view at a different resolution.
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            pose: self.pose,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |s: &str| Err(SceneError::InvalidCamera(s.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside the image");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside the image");
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        *self.pose.translation()
    }

    /// Unit ray through the pixel coordinate `(u, v)`; pixel `(i, j)` has its
    /// centre at `(u, v) = (i, j)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Ray {
        let d_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let d = self.pose.transform_vector(&d_cam).normalize();
        Ray::new(self.center(), d)
    }
}

/// Projects a world point to real-valued pixel coordinates.
pub fn project(camera: &CameraModel, p_world: &Vector3<f64>) -> Result<(f64, f64), SceneError> {
    let p = camera.pose.inverse_transform_point(p_world);
    if p.z <= 0.0 {
        return Err(SceneError::PointBehindCamera(p.z));
    }
    Ok((
        camera.fx * p.x / p.z + camera.cx,
        camera.fy * p.y / p.z + camera.cy,
    ))
}

/// Intersects the ray through `pixel` with the horizontal plane `z = height`.
pub fn backproject_at_height(
    camera: &CameraModel,
    pixel: (f64, f64),
    height: f64,
) -> Result<Vector3<f64>, SceneError> {
    let ray = camera.pixel_ray(pixel.0, pixel.1);
    if ray.direction.z.abs() < 1e-12 {
        return Err(SceneError::RayParallelToPlane(height));
    }
    let t = (height - ray.origin.z) / ray.direction.z;
    let mut p = ray.at(t);
    p.z = height;
    Ok(p)
}

/// Object primitives, expressed in the object frame with the base on `z = 0`
/// and the symmetry axis along `+z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Piecewise-linear surface of revolution. `profile` lists
    /// `[radius, height]` pairs bottom to top; an open top turns the object
    /// into a vessel with walls `wall_thickness` thick.
    Revolution {
        profile: Vec<[f64; 2]>,
        open_top: bool,
    },
    /// Closed box `w × d × h` centred on the axis.
    Box { w: f64, d: f64, h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub id: u32,
    #[serde(default)]
    pub name: String,
    pub shape: Shape,
    pub wall_thickness: f64,
    pub mass: f64,
    pub pose: Pose,
}

impl ObjectModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |reason: &str| {
            Err(SceneError::InvalidObject {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if self.id == 0 {
            return bad("id 0 is reserved for the table");
        }
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if !(self.wall_thickness > 0.0) {
            return bad("wall thickness must be positive");
        }
        match &self.shape {
            Shape::Revolution { profile, open_top } => {
                if profile.len() < 2 {
                    return bad("profile needs at least two vertices");
                }
                if profile.iter().any(|p| !(p[0] >= 0.0) || !p[1].is_finite()) {
                    return bad("profile radii must be non-negative");
                }
                if profile.windows(2).any(|w| !(w[1][1] > w[0][1])) {
                    return bad("profile heights must be strictly increasing");
                }
                if *open_top {
                    let min_r = profile.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                    if !(self.wall_thickness < min_r) {
                        return bad("wall thickness must be below the smallest profile radius");
                    }
                    let span = profile[profile.len() - 1][1] - profile[0][1];
                    if !(self.wall_thickness < span) {
                        return bad("wall thickness must be below the vessel height");
                    }
                }
            }
            Shape::Box { w, d, h } => {
                if !(*w > 0.0 && *d > 0.0 && *h > 0.0) {
                    return bad("box extents must be positive");
                }
            }
        }
        Ok(())
    }

    /// Height of the object along its own axis.
    pub fn local_height(&self) -> f64 {
        match &self.shape {
            Shape::Revolution { profile, .. } => profile[profile.len() - 1][1] - profile[0][1],
            Shape::Box { h, .. } => *h,
        }
    }

    /// Radius of a bounding cylinder around the local axis.
    pub fn local_radius(&self) -> f64 {
        match &self.shape {
            Shape::Revolution { profile, .. } => {
                profile.iter().map(|p| p[0]).fold(0.0, f64::max)
            }
            Shape::Box { w, d, .. } => 0.5 * (w * w + d * d).sqrt(),
        }
    }

    pub fn is_open(&self) -> bool {
        matches!(self.shape, Shape::Revolution { open_top: true, .. })
    }

    /// World-space bounding sphere `(centre, radius)`.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        let (z0, h) = match &self.shape {
            Shape::Revolution { profile, .. } => (profile[0][1], self.local_height()),
            Shape::Box { h, .. } => (0.0, *h),
        };
        let c_local = Vector3::new(0.0, 0.0, z0 + 0.5 * h);
        let r = (self.local_radius().powi(2) + (0.5 * h).powi(2)).sqrt();
        (self.pose.transform_point(&c_local), r * (1.0 + 1e-9) + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub normal: [f64; 3],
    pub height: f64,
}

impl Default for Table {
    fn default() -> Self {
        Self {
            normal: [0.0, 0.0, 1.0],
            height: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub table: Table,
    pub camera: CameraModel,
    pub objects: Vec<ObjectModel>,
}

impl Scene {
    pub fn new(camera: CameraModel, objects: Vec<ObjectModel>) -> Self {
        Self {
            table: Table::default(),
            camera,
            objects,
        }
    }

    pub fn table_normal(&self) -> Vector3<f64> {
        Vector3::from(self.table.normal)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.table_normal().norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(SceneError::InvalidTableNormal(n));
        }
        self.camera.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.objects {
            o.validate()?;
            if !seen.insert(o.id) {
                return Err(SceneError::DuplicateId(o.id));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: u32) -> Option<&ObjectModel> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn from_json(s: &str) -> Result<Self, SceneError> {
        let scene: Scene =
            serde_json::from_str(s).map_err(|e| SceneError::Malformed(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}
