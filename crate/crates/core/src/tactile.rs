//! Flat optical tactile sensor: indentation frames, subtraction-based contact
//! detection and contact-arc alignment.
//!
//! Sensor frame: origin at the centre of the sensing surface, `+z` pointing
//! out of the gel towards the object. Sensel `(i, j)` sits at
//! `((i + ½ − res_x/2)·pitch_x, (j + ½ − res_y/2)·pitch_y, 0)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::grid::{Grid, Mask};
use crate::imgeo::{fit_ellipse_f64, ImgeoError};
use crate::render::{top_surface, Intersector};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TactileError {
    #[error("frame resolutions differ: {0:?} vs {1:?}")]
    ResolutionMismatch((usize, usize), (usize, usize)),
    #[error("contact contour has only {0} points")]
    InsufficientContact(usize),
    #[error(transparent)]
    Degenerate(#[from] ImgeoError),
    #[error("invalid sensor: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TactileSensorSpec {
    pub area_x: f64,
    pub area_y: f64,
    pub res_x: usize,
    pub res_y: usize,
    /// Sensor→world.
    pub pose: Pose,
    pub max_indent: f64,
}

impl Default for TactileSensorSpec {
    fn default() -> Self {
        Self {
            area_x: 0.014,
            area_y: 0.0105,
            res_x: 160,
            res_y: 120,
            pose: facing_down(Vector3::new(0.0, 0.0, 0.1)),
            max_indent: 0.002,
        }
    }
}

/// Pose of a sensor whose gel faces the table, centred at `center`.
pub fn facing_down(center: Vector3<f64>) -> Pose {
    Pose::from_axis_angle(Vector3::x(), std::f64::consts::PI, center)
}

impl TactileSensorSpec {
    pub fn validate(&self) -> Result<(), TactileError> {
        if !(self.area_x > 0.0 && self.area_y > 0.0) {
            return Err(TactileError::InvalidSpec("sensing area must be positive".into()));
        }
        if self.res_x < 16 || self.res_y < 16 {
            return Err(TactileError::InvalidSpec("resolution must be at least 16×16".into()));
        }
        if !(self.max_indent > 0.0) {
            return Err(TactileError::InvalidSpec("max_indent must be positive".into()));
        }
        let normal = self.pose.transform_vector(&Vector3::z());
        if (normal + Vector3::z()).norm() > 1e-9 {
            return Err(TactileError::InvalidSpec("sensing surface must face the table".into()));
        }
        Ok(())
    }

    /// Same sensor moved so its surface centre is at `center`.
    pub fn at(&self, center: Vector3<f64>) -> Self {
        Self {
            pose: Pose::new(*self.pose.rotation(), center).expect("rotation already validated"),
            ..*self
        }
    }

    pub fn pitch(&self) -> (f64, f64) {
        (self.area_x / self.res_x as f64, self.area_y / self.res_y as f64)
    }

    /// Sensor-frame position of the real-valued sensel coordinate `(u, v)`.
    pub fn sensel_local(&self, u: f64, v: f64) -> Vector3<f64> {
        let (px, py) = self.pitch();
        Vector3::new(
            (u + 0.5 - self.res_x as f64 / 2.0) * px,
            (v + 0.5 - self.res_y as f64 / 2.0) * py,
            0.0,
        )
    }

    pub fn sensel_world(&self, u: f64, v: f64) -> Vector3<f64> {
        self.pose.transform_point(&self.sensel_local(u, v))
    }

    pub fn surface_height(&self) -> f64 {
        self.pose.translation().z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    /// Indentation depth in metres, `res_x × res_y`.
    pub image: Grid<f64>,
    pub pose: Pose,
    pub timestamp: u64,
}

/// Height of the highest object surface under every sensel (`-∞` where the
/// vertical line misses all objects). The table is not sensed.
pub fn surface_heights(scene: &Scene, spec: &TactileSensorSpec) -> Grid<f64> {
    let hitters: Vec<Intersector<'_>> = scene.objects.iter().map(Intersector::new).collect();
    let z_start = scene
        .objects
        .iter()
        .map(|o| {
            let (c, r) = o.bounding_sphere();
            c.z + r
        })
        .fold(spec.surface_height(), f64::max)
        + 0.01;
    Grid::from_fn(spec.res_x, spec.res_y, |i, j| {
        let p = spec.sensel_world(i as f64, j as f64);
        top_surface(&hitters, p.x, p.y, z_start).map_or(f64::NEG_INFINITY, |(z, _, _)| z)
    })
}

/// Frame for a sensor surface at `surface_z` above a precomputed height map.
pub fn frame_from_heights(
    heights: &Grid<f64>,
    spec: &TactileSensorSpec,
    surface_z: f64,
    timestamp: u64,
) -> TactileFrame {
    let t = spec.pose.translation();
    TactileFrame {
        image: heights.map(|&h| (h - surface_z).clamp(0.0, spec.max_indent)),
        pose: Pose::new(*spec.pose.rotation(), Vector3::new(t.x, t.y, surface_z))
            .expect("rotation already validated"),
        timestamp,
    }
}

pub fn simulate_tactile_frame(scene: &Scene, spec: &TactileSensorSpec) -> TactileFrame {
    frame_from_heights(&surface_heights(scene, spec), spec, spec.surface_height(), 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    pub value_threshold: f64,
    pub count_threshold: usize,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            value_threshold: 1e-4,
            count_threshold: 40,
        }
    }
}

/// Image-subtraction contact test: counts sensels whose absolute change
/// exceeds `value_threshold`.
pub fn detect_contact(
    reference: &TactileFrame,
    current: &TactileFrame,
    value_threshold: f64,
    count_threshold: usize,
) -> Result<(bool, usize), TactileError> {
    if !reference.image.same_shape(&current.image) {
        return Err(TactileError::ResolutionMismatch(
            reference.image.dims(),
            current.image.dims(),
        ));
    }
    let count = reference
        .image
        .as_slice()
        .iter()
        .zip(current.image.as_slice())
        .filter(|(a, b)| (*a - *b).abs() > value_threshold)
        .count();
    Ok((count > count_threshold, count))
}

const N4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Boundary edge of the contact region: midpoint between a contact sensel and
/// its non-contact 4-neighbour, with the outward step direction.
#[derive(Debug, Clone, Copy)]
struct Edge {
    pixel: (i64, i64),
    point: (f64, f64),
    outward: (f64, f64),
}

fn boundary_edges(contact: &Mask) -> Vec<Edge> {
    let (w, h) = (contact.width() as i64, contact.height() as i64);
    let mut edges = Vec::new();
    for (x, y) in contact.positives() {
        for (dx, dy) in N4 {
            let (nx, ny) = (x + dx, y + dy);
            // The frame border is not a physical edge of the contact.
            if nx < 0 || ny < 0 || nx >= w || ny >= h || contact.is_set(nx, ny) {
                continue;
            }
            edges.push(Edge {
                pixel: (x, y),
                point: (x as f64 + 0.5 * dx as f64, y as f64 + 0.5 * dy as f64),
                outward: (dx as f64, dy as f64),
            });
        }
    }
    edges
}

/// Groups edges whose sensels are 8-connected.
fn group_edges(contact: &Mask, edges: &[Edge]) -> Vec<Vec<Edge>> {
    let boundary = {
        let mut m = Mask::filled(contact.width(), contact.height(), false);
        for e in edges {
            m.set(e.pixel.0 as usize, e.pixel.1 as usize, true);
        }
        m
    };
    let comps = crate::imgeo::label_components(&boundary);
    let mut groups = vec![Vec::new(); comps.areas.len()];
    for e in edges {
        let l = *comps.labels.get(e.pixel.0 as usize, e.pixel.1 as usize);
        groups[l as usize - 1].push(*e);
    }
    groups
}

/// Algebraic least-squares circle `(centre, radius)`.
fn fit_circle(points: &[(f64, f64)]) -> Option<((f64, f64), f64)> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for &(x, y) in points {
        let row = Vector3::new(x, y, 1.0);
        a += row * row.transpose();
        b += row * (x * x + y * y);
    }
    let s = a.lu().solve(&b)?;
    let c = (s[0] / 2.0, s[1] / 2.0);
    let r2 = s[2] + c.0 * c.0 + c.1 * c.1;
    (r2 > 0.0 && r2.is_finite()).then(|| (c, r2.sqrt()))
}

/// Whether the group bounds a hole: its outward normals point towards the
/// centre of curvature.
fn is_inner(group: &[Edge]) -> bool {
    let pts: Vec<(f64, f64)> = group.iter().map(|e| e.point).collect();
    let Some((c, _)) = fit_circle(&pts) else {
        return false;
    };
    let n = pts.len() as f64;
    let m = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let out = group
        .iter()
        .fold((0.0, 0.0), |acc, e| (acc.0 + e.outward.0, acc.1 + e.outward.1));
    out.0 * (c.0 - m.0) + out.1 * (c.1 - m.1) > 0.0
}

/// Conic used for the inner contact arc.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcFit {
    /// Equal-axis conic. A rim seen by a gel parallel to the table is a
    /// circular arc, and short arcs leave a free ellipse under-determined.
    #[default]
    Circle,
    Ellipse,
}

/// Rectified rim centre in the world frame, from the inner arc of the contact
/// region. The returned height is that of the contacted surface.
pub fn tactile_align(frame: &TactileFrame, spec: &TactileSensorSpec) -> Result<Vector3<f64>, TactileError> {
    tactile_align_with(frame, spec, ArcFit::default())
}

pub fn tactile_align_with(
    frame: &TactileFrame,
    spec: &TactileSensorSpec,
    fit: ArcFit,
) -> Result<Vector3<f64>, TactileError> {
    let contact = frame.image.map(|&v| v > 0.0);
    let edges = boundary_edges(&contact);
    let inner = group_edges(&contact, &edges)
        .into_iter()
        .filter(|g| g.len() >= 5 && is_inner(g))
        .max_by_key(|g| g.len())
        .ok_or_else(|| TactileError::InsufficientContact(edges.len().min(4)))?;
    let pts: Vec<(f64, f64)> = inner.iter().map(|e| e.point).collect();
    let centre = match fit {
        ArcFit::Ellipse => fit_ellipse_f64(&pts)?.centroid,
        ArcFit::Circle => {
            fit_circle(&pts)
                .ok_or_else(|| ImgeoError::DegenerateInput("collinear arc".into()))?
                .0
        }
    };

    let indents: Vec<f64> = frame.image.as_slice().iter().copied().filter(|&v| v > 0.0).collect();
    let mean_indent = indents.iter().sum::<f64>() / indents.len() as f64;
    let sensor = spec.at(*frame.pose.translation());
    let mut p = sensor.sensel_world(centre.0, centre.1);
    p.z = sensor.surface_height() + mean_indent;
    Ok(p)
}
