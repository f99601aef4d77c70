//! Vision-guided tactile poking for transparent-object grasping.
//!
//! The crate is organised as a pipeline:
//!
//! - [`scene`]: object primitives, rigid poses and the pin-hole camera.
//! - [`render`]: ray-cast depth / normal / instance buffers.
//! - [`pokegt`]: poking-region ground truth from rendered buffers.
//! - [`imgeo`]: contour tracing, direct ellipse fitting, nearest-pixel search.
//! - [`plan`]: poking-point generation and heuristic grasp generation.
//! - [`tactile`]: flat tactile sensor simulation, contact detection, alignment.
//! - [`losses`]: mask losses (vanilla, weighted, PN, LPN) and their gradients.
//! - [`metrics`]: COCO-style average precision for poking-region masks.
//! - [`harness`]: trial simulation and success-rate benchmarks.
//!
//! [`io`], [`dataset`] and [`verify`] hold the file formats and the batch
//! drivers used by the command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod imgeo;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod plan;
pub mod pokegt;
pub mod render;
pub mod scene;
pub mod tactile;
pub mod verify;

pub use geometry::Pose;
pub use grid::{Grid, Mask};
