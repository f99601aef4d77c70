//! Poking-region ground truth from rendered geometry buffers.
//!
//! A pixel belongs to the poking region of an instance when its surface
//! normal is nearly parallel to the table normal and it sits high enough
//! above the table (which rejects e.g. the inner bottom of a cup).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Mask};
use crate::render::RenderBuffers;
use crate::scene::{CameraModel, Table};

/// Value of the dot-product map at pixels where the ray hit nothing.
pub const DOT_SENTINEL: f64 = -2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PokeGtError {
    #[error("dot threshold must lie in (0, 1], got {0}")]
    InvalidDotThreshold(f64),
    #[error("minimum height must be non-negative, got {0}")]
    InvalidMinHeight(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PokeRegionConfig {
    pub dot_threshold: f64,
    pub min_height: f64,
}

impl Default for PokeRegionConfig {
    /// cos 10° and 2 cm.
    fn default() -> Self {
        Self {
            dot_threshold: 10f64.to_radians().cos(),
            min_height: 0.02,
        }
    }
}

impl PokeRegionConfig {
    pub fn validate(&self) -> Result<(), PokeGtError> {
        if !(self.dot_threshold > 0.0 && self.dot_threshold <= 1.0) {
            return Err(PokeGtError::InvalidDotThreshold(self.dot_threshold));
        }
        if !(self.min_height >= 0.0) {
            return Err(PokeGtError::InvalidMinHeight(self.min_height));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAnnotation {
    pub id: u32,
    pub mask: Mask,
    pub poking_region: Mask,
    /// `(u_min, v_min, u_max, v_max)`, inclusive.
    pub bbox: (usize, usize, usize, usize),
}

impl InstanceAnnotation {
    pub fn poke_area(&self) -> usize {
        self.poking_region.count()
    }
}

pub fn dot_product_map(normals: &Grid<Vector3<f64>>, table_normal: &Vector3<f64>) -> Grid<f64> {
    normals.map(|n| {
        if n.norm_squared() == 0.0 {
            DOT_SENTINEL
        } else {
            n.dot(table_normal)
        }
    })
}

/// Height of each hit pixel above the table; `-∞` where nothing was hit.
pub fn height_map(depth: &Grid<f64>, camera: &CameraModel, table: &Table) -> Grid<f64> {
    let n = Vector3::from(table.normal);
    Grid::from_fn(depth.width(), depth.height(), |x, y| {
        let d = *depth.get(x, y);
        if !d.is_finite() {
            return f64::NEG_INFINITY;
        }
        let p = camera.pixel_ray(x as f64, y as f64).at(d);
        n.dot(&p) - table.height
    })
}

/// Per-instance masks and poking regions for every visible object.
pub fn poking_regions(
    buffers: &RenderBuffers,
    table: &Table,
    cfg: &PokeRegionConfig,
) -> Result<Vec<InstanceAnnotation>, PokeGtError> {
    cfg.validate()?;
    let dots = dot_product_map(&buffers.normals, &Vector3::from(table.normal));
    let heights = height_map(&buffers.depth, &buffers.camera, table);
    let candidate = Grid::from_vec(
        dots.width(),
        dots.height(),
        dots.as_slice()
            .iter()
            .zip(heights.as_slice())
            .map(|(&d, &h)| d >= cfg.dot_threshold && h >= cfg.min_height)
            .collect(),
    );
    Ok(buffers
        .visible_ids()
        .into_iter()
        .filter_map(|id| {
            let mask = buffers.instance_mask(id);
            let bbox = mask.bbox()?;
            let poking_region = Grid::from_vec(
                mask.width(),
                mask.height(),
                mask.as_slice()
                    .iter()
                    .zip(candidate.as_slice())
                    .map(|(&m, &c)| m && c)
                    .collect(),
            );
            Some(InstanceAnnotation {
                id,
                mask,
                poking_region,
                bbox,
            })
        })
        .collect())
}
