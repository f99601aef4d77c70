//! Ray-cast renderer producing depth, surface-normal and instance-id buffers.
//!
//! Geometry channels only: transparent objects are treated as opaque
//! surfaces. Depth is the range along the unit pixel ray.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::geometry::Ray;
use crate::grid::{Grid, Mask};
use crate::scene::{CameraModel, ObjectModel, Scene, Shape, Table};

const T_MIN: f64 = 1e-9;

/// Which surface of a primitive a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceTag {
    Base,
    OuterWall,
    TopCap,
    Rim,
    InnerWall,
    InnerBottom,
    BoxTop,
    BoxSide,
    BoxBottom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    /// Unit world-frame normal facing against the ray.
    pub normal: Vector3<f64>,
    pub face: FaceTag,
}

/// Frustum `r(z) = a + s·z` for `z ∈ [z0, z1]`.
#[derive(Debug, Clone, Copy)]
struct Frustum {
    a: f64,
    s: f64,
    z0: f64,
    z1: f64,
    face: FaceTag,
}

/// Horizontal annulus `r_in ≤ r ≤ r_out` at height `z` (a disk when `r_in < 0`).
#[derive(Debug, Clone, Copy)]
struct Ring {
    z: f64,
    r_in: f64,
    r_out: f64,
    up: bool,
    face: FaceTag,
}

#[derive(Debug, Clone)]
enum Surfaces {
    Revolution { frusta: Vec<Frustum>, rings: Vec<Ring> },
    Box { hx: f64, hy: f64, h: f64 },
}

/// Object geometry prepared for repeated ray queries.
#[derive(Debug, Clone)]
pub struct Intersector<'a> {
    object: &'a ObjectModel,
    surfaces: Surfaces,
    sphere: (Vector3<f64>, f64),
}

fn frustum(p0: [f64; 2], p1: [f64; 2], face: FaceTag) -> Frustum {
    let s = (p1[0] - p0[0]) / (p1[1] - p0[1]);
    Frustum {
        a: p0[0] - s * p0[1],
        s,
        z0: p0[1],
        z1: p1[1],
        face,
    }
}

/// Radius of a piecewise-linear profile at height `z` (clamped to its span).
pub fn profile_radius(profile: &[[f64; 2]], z: f64) -> f64 {
    if z <= profile[0][1] {
        return profile[0][0];
    }
    for w in profile.windows(2) {
        if z <= w[1][1] {
            let f = (z - w[0][1]) / (w[1][1] - w[0][1]);
            return w[0][0] + f * (w[1][0] - w[0][0]);
        }
    }
    profile[profile.len() - 1][0]
}

/// Vertices of the inner (cavity) profile of an open vessel.
pub fn inner_profile(profile: &[[f64; 2]], wall: f64) -> Vec<[f64; 2]> {
    let z_bottom = profile[0][1] + wall;
    let mut inner = vec![[profile_radius(profile, z_bottom) - wall, z_bottom]];
    inner.extend(
        profile
            .iter()
            .filter(|p| p[1] > z_bottom)
            .map(|p| [p[0] - wall, p[1]]),
    );
    inner
}

impl<'a> Intersector<'a> {
    pub fn new(object: &'a ObjectModel) -> Self {
        let surfaces = match &object.shape {
            Shape::Revolution { profile, open_top } => {
                let n = profile.len();
                let mut frusta: Vec<Frustum> = profile
                    .windows(2)
                    .map(|w| frustum(w[0], w[1], FaceTag::OuterWall))
                    .collect();
                let mut rings = vec![Ring {
                    z: profile[0][1],
                    r_in: -1.0,
                    r_out: profile[0][0],
                    up: false,
                    face: FaceTag::Base,
                }];
                let top = profile[n - 1];
                if *open_top {
                    let wall = object.wall_thickness;
                    let inner = inner_profile(profile, wall);
                    rings.push(Ring {
                        z: top[1],
                        r_in: top[0] - wall,
                        r_out: top[0],
                        up: true,
                        face: FaceTag::Rim,
                    });
                    rings.push(Ring {
                        z: inner[0][1],
                        r_in: -1.0,
                        r_out: inner[0][0],
                        up: true,
                        face: FaceTag::InnerBottom,
                    });
                    frusta.extend(
                        inner
                            .windows(2)
                            .map(|w| frustum(w[0], w[1], FaceTag::InnerWall)),
                    );
                } else {
                    rings.push(Ring {
                        z: top[1],
                        r_in: -1.0,
                        r_out: top[0],
                        up: true,
                        face: FaceTag::TopCap,
                    });
                }
                Surfaces::Revolution { frusta, rings }
            }
            Shape::Box { w, d, h } => Surfaces::Box {
                hx: 0.5 * w,
                hy: 0.5 * d,
                h: *h,
            },
        };
        Self {
            object,
            surfaces,
            sphere: object.bounding_sphere(),
        }
    }

    pub fn object(&self) -> &ObjectModel {
        self.object
    }

    fn misses_bound(&self, ray: &Ray) -> bool {
        let (c, r) = self.sphere;
        let oc = ray.origin - c;
        let b = oc.dot(&ray.direction);
        let cc = oc.norm_squared() - r * r;
        cc > 0.0 && (b > 0.0 || b * b < cc)
    }

    /// Nearest hit with `t > 0`, or `None`.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        if self.misses_bound(ray) {
            return None;
        }
        let pose = &self.object.pose;
        let local = Ray::new(
            pose.inverse_transform_point(&ray.origin),
            pose.inverse_transform_vector(&ray.direction),
        );
        let (t, n_local, face) = match &self.surfaces {
            Surfaces::Revolution { frusta, rings } => {
                let mut best: Option<(f64, Vector3<f64>, FaceTag)> = None;
                let mut consider = |cand: Option<(f64, Vector3<f64>, FaceTag)>| {
                    if let Some(c) = cand {
                        if best.is_none_or(|b| c.0 < b.0) {
                            best = Some(c);
                        }
                    }
                };
                for f in frusta {
                    consider(intersect_frustum(f, &local));
                }
                for r in rings {
                    consider(intersect_ring(r, &local));
                }
                best?
            }
            Surfaces::Box { hx, hy, h } => intersect_box(*hx, *hy, *h, &local)?,
        };
        let mut normal = pose.transform_vector(&n_local).normalize();
        if normal.dot(&ray.direction) > 0.0 {
            normal = -normal;
        }
        Some(Hit { t, normal, face })
    }
}

/// Nearest intersection of `ray` with a single object.
pub fn ray_intersect(object: &ObjectModel, ray: &Ray) -> Option<Hit> {
    Intersector::new(object).intersect(ray)
}

/// Roots of `a t² + b t + c = 0` in ascending order.
fn solve_quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-300 {
            return None;
        }
        let t = -c / b;
        return Some((t, t));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (t0, t1) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        (q / a, c / q)
    };
    Some(if t0 <= t1 { (t0, t1) } else { (t1, t0) })
}

fn intersect_frustum(f: &Frustum, ray: &Ray) -> Option<(f64, Vector3<f64>, FaceTag)> {
    let (o, d) = (&ray.origin, &ray.direction);
    let ro = f.a + f.s * o.z;
    let qa = d.x * d.x + d.y * d.y - f.s * f.s * d.z * d.z;
    let qb = 2.0 * (o.x * d.x + o.y * d.y - f.s * d.z * ro);
    let qc = o.x * o.x + o.y * o.y - ro * ro;
    let (t0, t1) = solve_quadratic(qa, qb, qc)?;
    for t in [t0, t1] {
        if t <= T_MIN {
            continue;
        }
        let p = ray.at(t);
        if p.z < f.z0 || p.z > f.z1 {
            continue;
        }
        let r = f.a + f.s * p.z;
        if r < 0.0 {
            continue;
        }
        let n = Vector3::new(p.x, p.y, -f.s * r);
        return Some((t, n, f.face));
    }
    None
}

fn intersect_ring(ring: &Ring, ray: &Ray) -> Option<(f64, Vector3<f64>, FaceTag)> {
    if ray.direction.z.abs() < 1e-300 {
        return None;
    }
    let t = (ring.z - ray.origin.z) / ray.direction.z;
    if t <= T_MIN {
        return None;
    }
    let p = ray.at(t);
    let r2 = p.x * p.x + p.y * p.y;
    let inside_outer = r2 <= ring.r_out * ring.r_out;
    let outside_inner = ring.r_in < 0.0 || r2 >= ring.r_in * ring.r_in;
    if inside_outer && outside_inner {
        let n = if ring.up { Vector3::z() } else { -Vector3::z() };
        Some((t, n, ring.face))
    } else {
        None
    }
}

fn intersect_box(hx: f64, hy: f64, h: f64, ray: &Ray) -> Option<(f64, Vector3<f64>, FaceTag)> {
    let lo = [-hx, -hy, 0.0];
    let hi = [hx, hy, h];
    let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut near_axis, mut far_axis) = (0usize, 0usize);
    let (mut near_sign, mut far_sign) = (1.0, 1.0);
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.direction[axis];
        if d.abs() < 1e-300 {
            if o < lo[axis] || o > hi[axis] {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[axis] - o) / d, (hi[axis] - o) / d);
        // Entering through the low face means the outward normal is −axis.
        let (mut sa, mut sb) = (-1.0, 1.0);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
            std::mem::swap(&mut sa, &mut sb);
        }
        if ta > t_near {
            t_near = ta;
            near_axis = axis;
            near_sign = sa;
        }
        if tb < t_far {
            t_far = tb;
            far_axis = axis;
            far_sign = sb;
        }
        if t_near > t_far {
            return None;
        }
    }
    let (t, axis, sign) = if t_near > T_MIN {
        (t_near, near_axis, near_sign)
    } else if t_far > T_MIN {
        (t_far, far_axis, far_sign)
    } else {
        return None;
    };
    let mut n = Vector3::zeros();
    n[axis] = sign;
    let face = match (axis, sign > 0.0) {
        (2, true) => FaceTag::BoxTop,
        (2, false) => FaceTag::BoxBottom,
        _ => FaceTag::BoxSide,
    };
    Some((t, n, face))
}

/// Distance along `ray` to the table plane, if it is hit in front.
pub fn intersect_table(table: &Table, ray: &Ray) -> Option<f64> {
    let n = Vector3::from(table.normal);
    let denom = n.dot(&ray.direction);
    if denom.abs() < 1e-300 {
        return None;
    }
    let t = (table.height - n.dot(&ray.origin)) / denom;
    (t > T_MIN).then_some(t)
}

/// Per-pixel geometry buffers. Non-hit pixels carry depth `+∞`, a zero
/// normal and id 0; table hits carry id 0 with a finite depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffers {
    pub camera: CameraModel,
    pub depth: Grid<f64>,
    pub normals: Grid<Vector3<f64>>,
    pub instance: Grid<u32>,
}

impl RenderBuffers {
    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn is_hit(&self, x: usize, y: usize) -> bool {
        self.depth.get(x, y).is_finite()
    }

    pub fn instance_mask(&self, id: u32) -> Mask {
        let data = self
            .instance
            .as_slice()
            .iter()
            .zip(self.depth.as_slice())
            .map(|(&i, d)| i == id && d.is_finite())
            .collect();
        Grid::from_vec(self.width(), self.height(), data)
    }

    /// Object ids present in the instance buffer, ascending.
    pub fn visible_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .instance
            .as_slice()
            .iter()
            .copied()
            .filter(|&v| v != 0)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy)]
struct PixelSample {
    depth: f64,
    normal: Vector3<f64>,
    id: u32,
}

fn shade_pixel(scene: &Scene, hitters: &[Intersector<'_>], ray: &Ray) -> PixelSample {
    let mut best = PixelSample {
        depth: f64::INFINITY,
        normal: Vector3::zeros(),
        id: 0,
    };
    if let Some(t) = intersect_table(&scene.table, ray) {
        let mut n = scene.table_normal();
        if n.dot(&ray.direction) > 0.0 {
            n = -n;
        }
        best = PixelSample {
            depth: t,
            normal: n,
            id: 0,
        };
    }
    for h in hitters {
        if let Some(hit) = h.intersect(ray) {
            if hit.t < best.depth {
                best = PixelSample {
                    depth: hit.t,
                    normal: hit.normal,
                    id: h.object().id,
                };
            }
        }
    }
    best
}

fn render_row(scene: &Scene, hitters: &[Intersector<'_>], y: usize) -> Vec<PixelSample> {
    let cam = &scene.camera;
    (0..cam.width)
        .map(|x| shade_pixel(scene, hitters, &cam.pixel_ray(x as f64, y as f64)))
        .collect()
}

fn assemble(camera: CameraModel, rows: Vec<Vec<PixelSample>>) -> RenderBuffers {
    let (w, h) = (camera.width, camera.height);
    let mut depth = Vec::with_capacity(w * h);
    let mut normals = Vec::with_capacity(w * h);
    let mut instance = Vec::with_capacity(w * h);
    for s in rows.into_iter().flatten() {
        depth.push(s.depth);
        normals.push(s.normal);
        instance.push(s.id);
    }
    RenderBuffers {
        camera,
        depth: Grid::from_vec(w, h, depth),
        normals: Grid::from_vec(w, h, normals),
        instance: Grid::from_vec(w, h, instance),
    }
}

/// Renders the scene; rows are cast in parallel.
pub fn render(scene: &Scene) -> RenderBuffers {
    let hitters: Vec<Intersector<'_>> = scene.objects.iter().map(Intersector::new).collect();
    let rows: Vec<Vec<PixelSample>> = (0..scene.camera.height)
        .into_par_iter()
        .map(|y| render_row(scene, &hitters, y))
        .collect();
    assemble(scene.camera, rows)
}

/// Single-threaded reference path for [`render`].
pub fn render_serial(scene: &Scene) -> RenderBuffers {
    let hitters: Vec<Intersector<'_>> = scene.objects.iter().map(Intersector::new).collect();
    let rows = (0..scene.camera.height)
        .map(|y| render_row(scene, &hitters, y))
        .collect();
    assemble(scene.camera, rows)
}

/// Highest object surface below the point `(x, y)`: casts a vertical ray
/// downwards from `z_start` and returns the first object hit.
pub fn top_surface(
    hitters: &[Intersector<'_>],
    x: f64,
    y: f64,
    z_start: f64,
) -> Option<(f64, Hit, u32)> {
    let ray = Ray::new(Vector3::new(x, y, z_start), -Vector3::z());
    let mut best: Option<(f64, Hit, u32)> = None;
    for h in hitters {
        if let Some(hit) = h.intersect(&ray) {
            if best.is_none_or(|b| hit.t < b.1.t) {
                best = Some((z_start - hit.t, hit, h.object().id));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::scene::CameraModel;

    fn cup(id: u32, r: f64, h: f64, wall: f64) -> ObjectModel {
        ObjectModel {
            id,
            name: "cup".into(),
            shape: Shape::Revolution {
                profile: vec![[r, 0.0], [r, h]],
                open_top: true,
            },
            wall_thickness: wall,
            mass: 0.2,
            pose: Pose::identity(),
        }
    }

    #[test]
    fn vertical_ray_on_rim() {
        let c = cup(1, 0.04, 0.1, 0.004);
        let ray = Ray::new(Vector3::new(0.038, 0.0, 0.5), -Vector3::z());
        let hit = ray_intersect(&c, &ray).unwrap();
        assert!((hit.t - 0.4).abs() < 1e-12);
        assert!((hit.normal - Vector3::z()).norm() < 1e-12);
        assert_eq!(hit.face, FaceTag::Rim);
    }

    #[test]
    fn vertical_ray_into_opening_hits_inner_bottom() {
        let c = cup(1, 0.04, 0.1, 0.004);
        let ray = Ray::new(Vector3::new(0.01, 0.0, 0.5), -Vector3::z());
        let hit = ray_intersect(&c, &ray).unwrap();
        assert_eq!(hit.face, FaceTag::InnerBottom);
        assert!((hit.t - (0.5 - 0.004)).abs() < 1e-12);
    }

    #[test]
    fn cylinder_wall_matches_quadratic_oracle() {
        let c = ObjectModel {
            shape: Shape::Revolution {
                profile: vec![[0.05, 0.0], [0.05, 0.3]],
                open_top: false,
            },
            ..cup(1, 0.05, 0.3, 0.004)
        };
        let o = Vector3::<f64>::new(-0.3, 0.02, 0.1);
        let d = Vector3::new(1.0, 0.1, 0.05).normalize();
        // |o_xy + t d_xy|² = r², nearest positive root, written out longhand.
        let a = d.x * d.x + d.y * d.y;
        let b = 2.0 * (o.x * d.x + o.y * d.y);
        let cc = o.x * o.x + o.y * o.y - 0.05 * 0.05;
        let t_expected = (-b - (b * b - 4.0 * a * cc).sqrt()) / (2.0 * a);
        let hit = ray_intersect(&c, &Ray::new(o, d)).unwrap();
        assert!((hit.t - t_expected).abs() < 1e-9);
        assert_eq!(hit.face, FaceTag::OuterWall);
        let p = o + d * t_expected;
        let n_expected = Vector3::new(p.x, p.y, 0.0).normalize();
        assert!((hit.normal - n_expected).norm() < 1e-9);
        assert!(hit.normal.dot(&d) < 0.0);
    }

    #[test]
    fn miss_is_none() {
        let c = cup(1, 0.04, 0.1, 0.004);
        let ray = Ray::new(Vector3::new(0.5, 0.5, 0.5), Vector3::z());
        assert!(ray_intersect(&c, &ray).is_none());
    }

    #[test]
    fn box_faces() {
        let b = ObjectModel {
            shape: Shape::Box { w: 0.1, d: 0.06, h: 0.08 },
            pose: Pose::from_axis_angle(Vector3::z(), 0.3, Vector3::new(0.01, 0.0, 0.0)),
            ..cup(2, 0.04, 0.1, 0.004)
        };
        let top = ray_intersect(&b, &Ray::new(Vector3::new(0.01, 0.0, 1.0), -Vector3::z())).unwrap();
        assert_eq!(top.face, FaceTag::BoxTop);
        assert!((top.t - 0.92).abs() < 1e-12);
        let side = ray_intersect(&b, &Ray::new(Vector3::new(-1.0, 0.0, 0.04), Vector3::x())).unwrap();
        assert_eq!(side.face, FaceTag::BoxSide);
        assert!(side.normal.dot(&Vector3::x()) < 0.0);
    }

    #[test]
    fn tapered_wall_normal_tilts() {
        let c = ObjectModel {
            shape: Shape::Revolution {
                profile: vec![[0.03, 0.0], [0.04, 0.1]],
                open_top: false,
            },
            ..cup(1, 0.04, 0.1, 0.004)
        };
        let hit = ray_intersect(&c, &Ray::new(Vector3::new(-1.0, 0.0, 0.05), Vector3::x())).unwrap();
        let expected = Vector3::new(-1.0, 0.0, -0.1).normalize();
        assert!((hit.normal - expected).norm() < 1e-9);
        assert!((hit.t - (1.0 - 0.035)).abs() < 1e-9);
    }

    #[test]
    fn empty_scene_depth_is_range_to_table() {
        let pose = Pose::look_at(Vector3::new(0.0, 0.0, 0.8), Vector3::zeros(), Vector3::y()).unwrap();
        let cam = CameraModel::with_intrinsics(64, 48, 60.0, 60.0, 32.0, 24.0, pose);
        let scene = Scene::new(cam, vec![]);
        let buf = render(&scene);
        for (x, y, &d) in buf.depth.iter_xy() {
            let ray = cam.pixel_ray(x as f64, y as f64);
            let cos = -ray.direction.z;
            assert!((d - 0.8 / cos).abs() < 1e-12);
            assert_eq!(*buf.instance.get(x, y), 0);
        }
    }

    #[test]
    fn parallel_render_matches_serial() {
        let cam = CameraModel::default().rescaled(64, 48);
        let scene = Scene::new(cam, vec![cup(1, 0.04, 0.1, 0.004)]);
        assert_eq!(render(&scene), render_serial(&scene));
    }
}
