//! Centroid + principal-axis pose estimation and trajectory retargeting.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::augment::CAMERA_FRAME;
use crate::capture::{evaluate_capture, CaptureVerdict};
use crate::error::{Error, Result};
use crate::pointcloud::{centroid, principal_axis, PointCloud, SpatialIndex};
use crate::se3::Pose;
use crate::smoothing::Trajectory;
use crate::synthetic::HookModel;

pub const ROBOT_FRAME: &str = "robot";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationContext {
    /// T_R_C.
    pub camera_to_robot: Pose,
    /// T_C_Table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_to_camera: Option<Pose>,
}

impl Default for CalibrationContext {
    fn default() -> Self {
        Self {
            camera_to_robot: Pose::identity(),
            table_to_camera: None,
        }
    }
}

/// How the 180° heading ambiguity was settled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadingRule {
    /// Toward the intensity-weighted centroid.
    Intensity,
    /// Toward +x of the working frame.
    WorkingFrame,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// Same position, heading turned by 180° about the table normal.
    pub flipped: Pose,
    pub rule: HeadingRule,
}

impl PoseEstimate {
    pub fn hypotheses(&self) -> [Pose; 2] {
        [self.pose, self.flipped]
    }
}

/// Pose of a segmented cloud lying on a table whose normal is `up` in the
/// cloud's frame (`+z` when the cloud is expressed in the table frame).
pub fn estimate_shoe_pose(segmented: &PointCloud, up: &Vector3<f64>) -> Result<PoseEstimate> {
    let c = centroid(segmented)?;
    let z = up
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidParams("table normal must be nonzero".into()))?;
    let axis = principal_axis(segmented)?;
    let mut x = axis - z * axis.dot(&z);
    if x.norm() < 1e-6 {
        return Err(Error::DegenerateCloud("principal axis is parallel to the table normal".into()));
    }
    x.normalize_mut();

    let front = segmented.intensities().and_then(|w| {
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| {
            let weighted = segmented
                .points()
                .iter()
                .zip(w)
                .fold(Vector3::zeros(), |acc, (p, wi)| acc + p.coords * *wi)
                / total;
            (weighted - c.coords).dot(&x)
        })
    });
    let rule = match front {
        Some(d) if d.abs() > 1e-9 => {
            if d < 0.0 {
                x = -x;
            }
            HeadingRule::Intensity
        }
        _ => {
            let ex = Vector3::x() - z * z.x;
            let reference = if ex.norm() > 1e-9 { ex } else { Vector3::y() - z * z.y };
            if x.dot(&reference) < 0.0 {
                x = -x;
            }
            HeadingRule::WorkingFrame
        }
    };
    Ok(PoseEstimate {
        pose: frame_pose(&x, &z, &c),
        flipped: frame_pose(&-x, &z, &c),
        rule,
    })
}

fn frame_pose(x: &Vector3<f64>, z: &Vector3<f64>, c: &Point3<f64>) -> Pose {
    let y = z.cross(x);
    Pose::new_repaired(Matrix3::from_columns(&[*x, y, *z]), c.coords).expect("orthonormal frame")
}

/// Heading of a pose's x-axis about `+z`, radians.
pub fn yaw_of(p: &Pose) -> f64 {
    let r = p.rotation();
    r[(1, 0)].atan2(r[(0, 0)])
}

/// Angular difference modulo 180°, in `[0, π/2]`.
pub fn axis_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

/// `^C W = T_C_S · ^S W`.
pub fn retarget_trajectory(shoe_traj: &Trajectory, shoe_pose: &Pose) -> Trajectory {
    shoe_traj.mapped(shoe_pose, CAMERA_FRAME)
}

/// `^R W = T_R_C · ^C W`.
pub fn to_robot_frame(traj: &Trajectory, cal: &CalibrationContext) -> Trajectory {
    traj.mapped(&cal.camera_to_robot, ROBOT_FRAME)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    /// Verdict for the hypothesis picked by the heading rule.
    pub chosen: CaptureVerdict,
    /// Verdict for the opposite heading.
    pub flipped: CaptureVerdict,
}

impl BaselineScore {
    pub fn best_case(&self) -> bool {
        self.chosen.success || self.flipped.success
    }

    pub fn ambiguity_blind(&self) -> bool {
        self.chosen.success
    }
}

/// Executes a shoe-frame trajectory at each estimated pose and scores it
/// against the shoe at its true pose. Poses are in a shared working frame.
pub fn score_hypotheses(
    estimate: &PoseEstimate,
    true_pose: &Pose,
    shoe_traj: &Trajectory,
    hook: &HookModel,
    shoe: &SpatialIndex,
    goal: &Point3<f64>,
    r_capture: f64,
) -> Result<BaselineScore> {
    let to_shoe = true_pose.inverse();
    let run = |est: &Pose| {
        let t = to_shoe.compose(est);
        evaluate_capture(&shoe_traj.mapped(&t, shoe_traj.frame()), hook, shoe, goal, r_capture)
    };
    Ok(BaselineScore {
        chosen: run(&estimate.pose)?,
        flipped: run(&estimate.flipped)?,
    })
}
