//! Direct least-squares ellipse fitting.
//!
//! Minimises the algebraic distance of a conic subject to `4AC − B² = 1`,
//! which forces the solution to be an ellipse. The 6×6 generalised
//! eigenproblem is reduced to a 3×3 one by eliminating the linear terms
//! (the numerically stable block decomposition), after centring and scaling
//! the input points.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ImgeoError;
use crate::geometry::wrap_half_turn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Centre `(u, v)` in pixels.
    pub centroid: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Orientation of the major axis from the +u axis, in `[0, π)`.
    pub rotation_angle: f64,
}

impl Ellipse {
    /// Orientation of the minor axis, in `[0, π)`.
    pub fn minor_axis_angle(&self) -> f64 {
        wrap_half_turn(self.rotation_angle + std::f64::consts::FRAC_PI_2)
    }

    /// Point at parameter `t` of `c + a·cos t·e_major + b·sin t·e_minor`.
    pub fn point_at(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.rotation_angle.sin_cos();
        let (x, y) = (self.semi_major * t.cos(), self.semi_minor * t.sin());
        (
            self.centroid.0 + x * c - y * s,
            self.centroid.1 + x * s + y * c,
        )
    }
}

/// Fits an ellipse to integer pixel coordinates.
pub fn fit_ellipse(points: &[(i64, i64)]) -> Result<Ellipse, ImgeoError> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    fit_ellipse_f64(&pts)
}

pub fn fit_ellipse_f64(points: &[(f64, f64)]) -> Result<Ellipse, ImgeoError> {
    let degenerate = |why: &str| Err(ImgeoError::DegenerateInput(why.to_string()));
    if points.len() < 5 {
        return degenerate("at least five points are required");
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return degenerate("non-finite coordinates");
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let scale = (points
        .iter()
        .map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(scale > 0.0) {
        return degenerate("all points coincide");
    }

    // Scatter blocks for quadratic terms [x², xy, y²] and linear terms [x, y, 1].
    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for p in points {
        let x = (p.0 - mx) / scale;
        let y = (p.1 - my) / scale;
        let q = Vector3::new(x * x, x * y, y * y);
        let l = Vector3::new(x, y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }
    // Collinear points make the linear block singular.
    let s3_inv = match s3.try_inverse() {
        Some(m) if s3.determinant().abs() > 1e-12 * n.powi(3) => m,
        _ => return degenerate("points are collinear"),
    };
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]].
    let reduced = Matrix3::from_rows(&[
        m.row(2) * 0.5,
        -m.row(1),
        m.row(0) * 0.5,
    ]);

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in reduced.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let Some(v) = null_vector(&(reduced - Matrix3::identity() * lambda.re)) else {
            continue;
        };
        let constraint = 4.0 * v[0] * v[2] - v[1] * v[1];
        if constraint > 0.0 && best.is_none_or(|(l, _)| lambda.re.abs() < l) {
            best = Some((lambda.re.abs(), v));
        }
    }
    let Some((_, quad)) = best else {
        return degenerate("no elliptical solution");
    };
    let lin = t * quad;
    let conic = [quad[0], quad[1], quad[2], lin[0], lin[1], lin[2]];
    let e = conic_to_ellipse(conic).ok_or_else(|| {
        ImgeoError::DegenerateInput("conic does not describe a real ellipse".to_string())
    })?;
    Ok(Ellipse {
        centroid: (e.centroid.0 * scale + mx, e.centroid.1 * scale + my),
        semi_major: e.semi_major * scale,
        semi_minor: e.semi_minor * scale,
        rotation_angle: e.rotation_angle,
    })
}

fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    Some(v_t.row(idx).transpose())
}

/// Geometric parameters of `A x² + B xy + C y² + D x + E y + F = 0`.
fn conic_to_ellipse(c: [f64; 6]) -> Option<Ellipse> {
    let [mut a, mut b, mut cc, mut d, mut e, mut f] = c;
    if a + cc < 0.0 {
        for v in [&mut a, &mut b, &mut cc, &mut d, &mut e, &mut f] {
            *v = -*v;
        }
    }
    let det = 4.0 * a * cc - b * b;
    if !(det > 0.0) {
        return None;
    }
    let x0 = (b * e - 2.0 * cc * d) / det;
    let y0 = (b * d - 2.0 * a * e) / det;
    let f0 = f + 0.5 * (d * x0 + e * y0);
    let mean = 0.5 * (a + cc);
    let radius = (0.25 * (a - cc).powi(2) + 0.25 * b * b).sqrt();
    let (l_small, l_large) = (mean - radius, mean + radius);
    if !(l_small > 0.0 && f0 < 0.0) {
        return None;
    }
    let semi_major = (-f0 / l_small).sqrt();
    let semi_minor = (-f0 / l_large).sqrt();
    // 0.5·atan2(B, A − C) points along the large-eigenvalue (minor) axis.
    let minor = 0.5 * b.atan2(a - cc);
    let ellipse = Ellipse {
        centroid: (x0, y0),
        semi_major,
        semi_minor,
        rotation_angle: wrap_half_turn(minor + std::f64::consts::FRAC_PI_2),
    };
    [x0, y0, semi_major, semi_minor]
        .iter()
        .all(|v| v.is_finite())
        .then_some(ellipse)
}
