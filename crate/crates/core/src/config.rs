//! TOML configuration shared by the command-line verbs.
//!
//! ```toml
//! [planner]
//! goal_bias = 0.1
//! max_iterations = 20000
//!
//! [trajectory]
//! waypoints = 9
//!
//! [augmentation]
//! theta = [-0.25, 0.25]
//! depth = { kind = "target-depth", min = 0.4, max = 1.0 }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentationRanges;
use crate::capture::{DEFAULT_CAPTURE_RADIUS, DEFAULT_PENETRATION_TOL};
use crate::dataset::ViewRing;
use crate::error::{Error, Result};
use crate::expert::{ExpertConfig, LiftPlacement, Spacing};
use crate::planner::PlannerConfig;
use crate::se3::CameraIntrinsics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    pub smoothing_iterations: usize,
    pub final_prune: bool,
    pub waypoints: usize,
    pub lift: LiftPlacement,
    pub spacing: Spacing,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        let e = ExpertConfig::default();
        Self {
            smoothing_iterations: e.smoothing_iterations,
            final_prune: e.final_prune,
            waypoints: e.waypoints,
            lift: e.lift,
            spacing: e.spacing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureSettings {
    pub r_capture: f64,
    pub penetration_tol: f64,
}

impl Default for CaptureSettings {
    fn default() -> Self {
        Self {
            r_capture: DEFAULT_CAPTURE_RADIUS,
            penetration_tol: DEFAULT_PENETRATION_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub planner: PlannerConfig,
    pub trajectory: TrajectorySettings,
    pub augmentation: AugmentationRanges,
    pub views: ViewRing,
    pub camera: CameraIntrinsics,
    pub capture: CaptureSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            trajectory: TrajectorySettings::default(),
            augmentation: AugmentationRanges::default(),
            views: ViewRing::default(),
            camera: CameraIntrinsics::default_vga(),
            capture: CaptureSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.augmentation.validate()?;
        if self.trajectory.waypoints < 2 {
            return Err(Error::InvalidConfig("trajectories need at least 2 waypoints".into()));
        }
        if !(self.capture.r_capture >= 0.0 && self.capture.penetration_tol >= 0.0) {
            return Err(Error::InvalidConfig("capture radii must be non-negative".into()));
        }
        Ok(())
    }

    pub fn expert(&self) -> ExpertConfig {
        let t = &self.trajectory;
        ExpertConfig {
            planner: self.planner.clone(),
            smoothing_iterations: t.smoothing_iterations,
            final_prune: t.final_prune,
            waypoints: t.waypoints,
            lift: t.lift,
            spacing: t.spacing,
        }
    }
}
