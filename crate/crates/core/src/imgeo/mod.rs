//! 2-D image geometry: contour tracing, ellipse fitting and nearest-pixel search.

mod contour;
mod ellipse;
mod nearest;

pub use contour::{find_external_contour, label_components, largest_component, Components};
pub use ellipse::{fit_ellipse, fit_ellipse_f64, Ellipse};
pub use nearest::nearest_positive;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImgeoError {
    #[error("mask has no positive pixels")]
    EmptyMask,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}
