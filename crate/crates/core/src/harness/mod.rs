//! Trial simulation and success-rate benchmarks: poke outcomes, grasp
//! outcomes, calibration-error injection and tipping statics.
//!
//! Every random draw comes from a generator seeded by
//! [`seed::mix`]`(master, object index, stream, attempt index)`, so each
//! trial is reproducible on its own.

mod benchmark;
pub mod catalog;
mod grasp;
mod poke;
pub mod seed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::GripperSpec;
use crate::pokegt::PokeRegionConfig;
use crate::tactile::{ContactConfig, TactileSensorSpec};

pub use benchmark::{
    alignment_experiment, rates_csv, run_benchmark, run_trial, trial_scene, AlignmentReport,
    BenchmarkResult, RateRow, TrialRecord,
};
pub use grasp::{simulate_grasp, FailureReason, GraspOutcome, GraspStatus};
pub use poke::{
    inject_calibration_error, lever_arms, roll_offset, simulate_poke, tipping_max_force, PokeOutcome, PokeStatus,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("lever arm d2 must be positive, got {0}")]
    InvalidGeometry(f64),
    #[error("invalid trial config: {0}")]
    InvalidConfig(String),
}

/// Where the poke is aimed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Guidance {
    #[serde(rename = "bbox")]
    BBox,
    #[serde(rename = "mask")]
    Mask,
    #[serde(rename = "pr")]
    PokingRegion,
}

impl Guidance {
    pub const ALL: [Guidance; 3] = [Guidance::BBox, Guidance::Mask, Guidance::PokingRegion];

    pub fn name(self) -> &'static str {
        match self {
            Self::BBox => "bbox",
            Self::Mask => "mask",
            Self::PokingRegion => "pr",
        }
    }

    /// Mode index fed to the seed mixer.
    pub fn index(self) -> u64 {
        match self {
            Self::BBox => 0,
            Self::Mask => 1,
            Self::PokingRegion => 2,
        }
    }
}

impl fmt::Display for Guidance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Guidance {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

/// How the grasp's contact point is localized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Localization {
    /// Depth-camera reading at the guidance pixel, with the depth noise model.
    Camera,
    /// Contact point of a tactile poke.
    Tactile,
}

impl Localization {
    pub fn name(self) -> &'static str {
        match self {
            Self::Camera => "camera",
            Self::Tactile => "tactile",
        }
    }
}

/// Depth corruption inside transparent-object masks for camera-only
/// localization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoise {
    /// Probability that the depth reading passes through to the table.
    pub dropout_p: f64,
    /// Gaussian range noise on surviving readings, metres.
    pub sigma: f64,
}

impl Default for DepthNoise {
    fn default() -> Self {
        Self {
            dropout_p: 0.5,
            sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub guidance: Guidance,
    /// Sensor height below which a descent counts as a miss.
    pub h_stop: f64,
    /// Force at which the arm stops, newtons.
    pub f_stop: f64,
    pub gripper: GripperSpec,
    /// Half-width of the uniform calibration error along world x.
    pub calib_range: f64,
    /// Chance that a side-lying round object is disturbed after the sensor
    /// retracts.
    pub adhesion_p: f64,
    pub master_seed: u64,
    /// How far below the contact height the fingers close.
    pub descent_offset: f64,
    /// Mean surface tilt under the gel beyond which the object slides away.
    pub max_contact_tilt_deg: f64,
    /// Largest sideways offset from the top line of a lying round object
    /// that does not set it rolling.
    pub roll_tolerance: f64,
    pub depth_noise: DepthNoise,
    pub contact: ContactConfig,
    pub sensor: TactileSensorSpec,
    /// Descent increment of the sensor, metres.
    pub poke_step: f64,
    /// Correct the grasp centroid with the tactile image.
    pub tactile_align: bool,
    /// Objects are placed within `±placement_spread` of the origin.
    pub placement_spread: f64,
    pub region: PokeRegionConfig,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            guidance: Guidance::PokingRegion,
            h_stop: 0.02,
            f_stop: 0.5,
            gripper: GripperSpec::default(),
            calib_range: 0.0,
            adhesion_p: 0.1,
            master_seed: 0,
            descent_offset: 0.02,
            max_contact_tilt_deg: 20.0,
            roll_tolerance: 0.002,
            depth_noise: DepthNoise::default(),
            contact: ContactConfig::default(),
            sensor: TactileSensorSpec::default(),
            poke_step: 1e-4,
            tactile_align: false,
            placement_spread: 0.05,
            region: PokeRegionConfig::default(),
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |s: &str| Err(HarnessError::InvalidConfig(s.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.h_stop >= 0.0) {
            return bad("h_stop must be non-negative");
        }
        if !(self.f_stop > 0.0) {
            return bad("f_stop must be positive");
        }
        if !(self.calib_range >= 0.0) {
            return bad("calibration range must be non-negative");
        }
        if !prob(self.adhesion_p) || !prob(self.depth_noise.dropout_p) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.depth_noise.sigma >= 0.0) {
            return bad("depth noise sigma must be non-negative");
        }
        if !(self.poke_step > 0.0) {
            return bad("poke step must be positive");
        }
        if !(self.descent_offset >= 0.0 && self.placement_spread >= 0.0 && self.roll_tolerance >= 0.0) {
            return bad("descent offset, placement spread and roll tolerance must be non-negative");
        }
        self.gripper
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.sensor
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.region
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}
