//! Plan → smooth → lift → resample: the full expert-trajectory recipe.

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::planner::{append_lift_waypoint, plan_in, CollisionWorld, PlannerConfig, RawPath};
use crate::pointcloud::{centroid, PointCloud};
use crate::se3::{MetricWeights, Pose};
use crate::smoothing::{resample_or_repeat, shortcut_smooth, SmoothingConfig, Trajectory, DEFAULT_WAYPOINTS};

/// Height of the default start pose above the object centroid, meters.
pub const START_HEIGHT: f64 = 0.3;

/// Where the lift waypoint sits in the resampled trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiftPlacement {
    /// `n − 1` evenly spaced approach waypoints ending exactly at the goal,
    /// then the lift waypoint.
    #[default]
    GoalKnot,
    /// Lift appended first, then `n` evenly spaced waypoints over the whole path.
    Spanned,
}

/// Which distance sets "evenly spaced".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Se3,
    TranslationOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub planner: PlannerConfig,
    pub smoothing_iterations: usize,
    pub final_prune: bool,
    pub waypoints: usize,
    pub lift: LiftPlacement,
    pub spacing: Spacing,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            smoothing_iterations: 100,
            final_prune: true,
            waypoints: DEFAULT_WAYPOINTS,
            lift: LiftPlacement::default(),
            spacing: Spacing::default(),
        }
    }
}

impl ExpertConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.planner.seed = seed;
        c
    }

    pub fn smoothing(&self) -> SmoothingConfig {
        SmoothingConfig {
            iterations: self.smoothing_iterations,
            final_prune: self.final_prune,
            ..SmoothingConfig::for_planner(&self.planner)
        }
    }

    fn spacing_weights(&self) -> MetricWeights {
        match self.spacing {
            Spacing::Se3 => self.planner.weights,
            Spacing::TranslationOnly => MetricWeights::TRANSLATION_ONLY,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExpertTrajectory {
    pub raw: RawPath,
    pub smoothed: RawPath,
    pub trajectory: Trajectory,
}

/// Start pose above the object with the hook hanging straight down.
pub fn default_start(object: &PointCloud) -> Result<Pose> {
    let c = centroid(object)?;
    Ok(Pose::from_translation(c.x, c.y, c.z + START_HEIGHT))
}

/// Goal pose with the hook tip at `goal` and the tool axes aligned with the object frame.
pub fn goal_pose(goal: &Point3<f64>) -> Pose {
    Pose::identity().with_translation(goal.coords)
}

/// Smoothing draws from a stream separate from planning so the two stay independent.
pub fn smoothing_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Plans, smooths, adds the lift waypoint and resamples to `cfg.waypoints` poses.
pub fn generate_expert_trajectory(
    start: &Pose,
    goal: &Pose,
    world: &CollisionWorld,
    frame: &str,
    cfg: &ExpertConfig,
) -> Result<ExpertTrajectory> {
    let raw = plan_in(start, goal, world, &cfg.planner, frame)?;
    let mut rng = smoothing_rng(cfg.planner.seed);
    let smoothed = shortcut_smooth(&raw, world, &cfg.smoothing(), &mut rng);
    let trajectory = finish_trajectory(&smoothed, cfg)?;
    Ok(ExpertTrajectory {
        raw,
        smoothed,
        trajectory,
    })
}

/// Adds the lift waypoint to a smoothed path and resamples it.
pub fn finish_trajectory(smoothed: &RawPath, cfg: &ExpertConfig) -> Result<Trajectory> {
    let w = cfg.spacing_weights();
    let n = cfg.waypoints;
    let lifted = append_lift_waypoint(smoothed)?;
    let poses = match cfg.lift {
        LiftPlacement::Spanned => resample_or_repeat(&lifted.waypoints, n, &w)?,
        LiftPlacement::GoalKnot => {
            let mut p = if n >= 3 {
                resample_or_repeat(&smoothed.waypoints, n - 1, &w)?
            } else {
                vec![*smoothed.waypoints.last().unwrap(); n.saturating_sub(1)]
            };
            p.push(*lifted.waypoints.last().unwrap());
            p
        }
    };
    Trajectory::new(smoothed.frame.clone(), poses)
}

/// Lift offset as a vector, for callers checking the trajectory shape.
pub fn lift_offset() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, crate::planner::LIFT_HEIGHT)
}
