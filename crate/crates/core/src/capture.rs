//! Geometric capture proxy: does the hook reach the goal without penetrating the shoe?
//!
//! A trajectory succeeds when the swept hook stays clear of the shoe from the
//! first waypoint to the goal waypoint (the penultimate one; the last is the
//! lift) and the hook tip ends within `r_capture` of the annotated goal point.

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{default_start, generate_expert_trajectory, goal_pose, ExpertConfig};
use crate::planner::CollisionWorld;
use crate::pointcloud::SpatialIndex;
use crate::se3::{angle_between, Pose};
use crate::smoothing::Trajectory;
use crate::synthetic::{generate_synthetic_shoe, Archetype, HookModel, SyntheticShoe};

pub const SWEEP_RESOLUTION: f64 = 0.005;
pub const DEFAULT_PENETRATION_TOL: f64 = 0.001;
pub const DEFAULT_CAPTURE_RADIUS: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FailureReason {
    CollisionAtWaypoint { waypoint: usize },
    GoalMiss { distance: f64 },
    IncompleteTrajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureVerdict {
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
}

impl CaptureVerdict {
    fn ok() -> Self {
        Self {
            success: true,
            failure_reason: None,
        }
    }

    fn fail(reason: FailureReason) -> Self {
        Self {
            success: false,
            failure_reason: Some(reason),
        }
    }
}

/// First penetrating pose found by a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepHit {
    /// Waypoint the offending pose belongs to: the segment's end waypoint,
    /// or its start when the start pose itself penetrates.
    pub waypoint: usize,
    pub segment: usize,
    pub fraction: f64,
}

fn check_frames(traj: &Trajectory, shoe: &SpatialIndex) -> Result<()> {
    if traj.frame() != shoe.frame() {
        return Err(Error::FrameMismatch {
            trajectory: traj.frame().to_string(),
            cloud: shoe.frame().to_string(),
        });
    }
    Ok(())
}

/// Sweeps the hook through waypoints `0..=last` at `resolution` meters of
/// point displacement and reports the first pose closer than `penetration_tol`.
pub fn sweep_check(
    traj: &Trajectory,
    hook: &HookModel,
    shoe: &SpatialIndex,
    penetration_tol: f64,
    last: usize,
    resolution: f64,
) -> Result<Option<SweepHit>> {
    check_frames(traj, shoe)?;
    let pts = hook.cloud.points();
    let reach = hook.reach();
    let penetrates = |p: &Pose| pts.iter().any(|h| shoe.any_within(&p.transform_point(h), penetration_tol));
    let wps = &traj.waypoints()[..=last.min(traj.len() - 1)];
    if penetrates(&wps[0]) {
        return Ok(Some(SweepHit {
            waypoint: 0,
            segment: 0,
            fraction: 0.0,
        }));
    }
    for (k, seg) in wps.windows(2).enumerate() {
        let (a, b) = (&seg[0], &seg[1]);
        let dt = (a.translation() - b.translation()).norm();
        let dr = angle_between(a.rotation(), b.rotation()) * reach;
        let n = ((dt.max(dr) / resolution).ceil() as usize).max(1);
        for i in 1..=n {
            let f = i as f64 / n as f64;
            if penetrates(&a.interpolate(b, f)) {
                return Ok(Some(SweepHit {
                    waypoint: k + 1,
                    segment: k,
                    fraction: f,
                }));
            }
        }
    }
    Ok(None)
}

/// Tip position at the goal waypoint.
pub fn goal_tip(traj: &Trajectory, hook: &HookModel) -> Option<Point3<f64>> {
    let n = traj.len();
    (n >= 2).then(|| traj.waypoints()[n - 2].transform_point(&hook.tip))
}

pub fn evaluate_capture(
    traj: &Trajectory,
    hook: &HookModel,
    shoe: &SpatialIndex,
    goal_point: &Point3<f64>,
    r_capture: f64,
) -> Result<CaptureVerdict> {
    evaluate_capture_with(traj, hook, shoe, goal_point, r_capture, DEFAULT_PENETRATION_TOL)
}

pub fn evaluate_capture_with(
    traj: &Trajectory,
    hook: &HookModel,
    shoe: &SpatialIndex,
    goal_point: &Point3<f64>,
    r_capture: f64,
    penetration_tol: f64,
) -> Result<CaptureVerdict> {
    check_frames(traj, shoe)?;
    if traj.len() < 2 {
        return Ok(CaptureVerdict::fail(FailureReason::IncompleteTrajectory));
    }
    let goal_idx = traj.len() - 2;
    if let Some(hit) = sweep_check(traj, hook, shoe, penetration_tol, goal_idx, SWEEP_RESOLUTION)? {
        return Ok(CaptureVerdict::fail(FailureReason::CollisionAtWaypoint { waypoint: hit.waypoint }));
    }
    let distance = (goal_tip(traj, hook).unwrap() - goal_point).norm();
    if distance > r_capture {
        return Ok(CaptureVerdict::fail(FailureReason::GoalMiss { distance }));
    }
    Ok(CaptureVerdict::ok())
}

/// A shoe set up for planning and evaluation.
pub struct ShoeScene {
    pub shoe: SyntheticShoe,
    pub index: SpatialIndex,
    pub world: CollisionWorld,
}

impl ShoeScene {
    pub fn new(shoe: SyntheticShoe, hook: &HookModel, clearance: f64) -> Self {
        let index = SpatialIndex::build(&shoe.cloud);
        let world = CollisionWorld::with_index(&hook.cloud, index.clone(), clearance);
        Self { shoe, index, world }
    }

    pub fn for_archetype(archetype: Archetype, shoe_seed: u64, hook: &HookModel, clearance: f64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(shoe_seed);
        let shoe = generate_synthetic_shoe(archetype, &archetype.default_params(), &mut rng)?;
        Ok(Self::new(shoe, hook, clearance))
    }

    pub fn plan(&self, cfg: &ExpertConfig) -> Result<crate::expert::ExpertTrajectory> {
        let start = default_start(&self.shoe.cloud)?;
        let goal = goal_pose(&self.shoe.goal);
        generate_expert_trajectory(&start, &goal, &self.world, self.shoe.cloud.frame(), cfg)
    }
}

/// Success fractions of each archetype's planned trajectories on every archetype.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureMatrix {
    pub archetypes: Vec<Archetype>,
    pub seeds: Vec<u64>,
    /// `success[i][j]`: trajectories planned for archetype `i`, executed on archetype `j`.
    pub success: Vec<Vec<f64>>,
    /// Planning failures per trajectory archetype (counted as failures on every shoe).
    pub planning_failures: Vec<usize>,
}

impl CaptureMatrix {
    pub fn diagonal_successes(&self) -> Vec<usize> {
        let n = self.seeds.len() as f64;
        (0..self.archetypes.len())
            .map(|i| (self.success[i][i] * n).round() as usize)
            .collect()
    }
}

pub fn capture_matrix(
    archetypes: &[Archetype],
    seeds: &[u64],
    shoe_seed: u64,
    hook: &HookModel,
    cfg: &ExpertConfig,
    r_capture: f64,
) -> Result<CaptureMatrix> {
    let scenes = archetypes
        .iter()
        .map(|&a| ShoeScene::for_archetype(a, shoe_seed, hook, cfg.planner.clearance_eps))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..scenes.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let rows: Vec<(usize, Option<Vec<bool>>)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let planned = scenes[i].plan(&cfg.with_seed(seed));
            let outcome = planned.ok().map(|e| {
                scenes
                    .iter()
                    .map(|target| {
                        evaluate_capture(&e.trajectory, hook, &target.index, &target.shoe.goal, r_capture)
                            .map(|v| v.success)
                            .unwrap_or(false)
                    })
                    .collect()
            });
            (i, outcome)
        })
        .collect();
    let n = scenes.len();
    let mut success = vec![vec![0.0; n]; n];
    let mut planning_failures = vec![0; n];
    for (i, outcome) in rows {
        match outcome {
            Some(hits) => {
                for (j, ok) in hits.into_iter().enumerate() {
                    if ok {
                        success[i][j] += 1.0;
                    }
                }
            }
            None => planning_failures[i] += 1,
        }
    }
    for row in &mut success {
        for v in row.iter_mut() {
            *v /= seeds.len().max(1) as f64;
        }
    }
    Ok(CaptureMatrix {
        archetypes: archetypes.to_vec(),
        seeds: seeds.to_vec(),
        success,
        planning_failures,
    })
}
