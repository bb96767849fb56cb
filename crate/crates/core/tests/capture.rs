mod common;

use common::{brute_min_sq, scene};
use hookplan_core::capture::*;
use hookplan_core::expert::{ExpertConfig, LiftPlacement};
use hookplan_core::se3::Pose;
use hookplan_core::smoothing::Trajectory;
use hookplan_core::synthetic::{Archetype, HookModel};
use hookplan_core::Error;

fn line(frame: &str, from: [f64; 3], to: [f64; 3], n: usize) -> Trajectory {
    let wps = (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            Pose::from_translation(
                from[0] + (to[0] - from[0]) * f,
                from[1] + (to[1] - from[1]) * f,
                from[2] + (to[2] - from[2]) * f,
            )
        })
        .collect();
    Trajectory::new(frame, wps).unwrap()
}

/// First colliding segment found by a fine brute-force sweep, as the index of its end waypoint.
fn brute_first_hit(traj: &Trajectory, hook: &HookModel, shoe: &[nalgebra::Point3<f64>], tol: f64, step: f64) -> Option<usize> {
    let wps = traj.waypoints();
    let hits = |p: &Pose| hook.cloud.points().iter().any(|h| brute_min_sq(shoe, &p.transform_point(h)) < tol * tol);
    if hits(&wps[0]) {
        return Some(0);
    }
    for k in 0..wps.len() - 1 {
        let d = (wps[k].translation() - wps[k + 1].translation()).norm();
        let n = (d / step).ceil().max(1.0) as usize;
        for i in 1..=n {
            if hits(&wps[k].interpolate(&wps[k + 1], i as f64 / n as f64)) {
                return Some(k + 1);
            }
        }
    }
    None
}

#[test]
fn far_field_trajectory_is_clean() {
    let s = scene(Archetype::OpenBox);
    let t = line("shoe", [-0.5, 1.0, 0.0], [0.5, 1.0, 0.0], 9);
    let hook = HookModel::default();
    assert_eq!(sweep_check(&t, &hook, &s.index, DEFAULT_PENETRATION_TOL, 8, SWEEP_RESOLUTION).unwrap(), None);
}

#[test]
fn crossing_the_shell_flags_the_crossing_waypoint() {
    let s = scene(Archetype::OpenBox);
    let hook = HookModel::default();
    // Horizontal pass through the shell center, hook hanging from the tip.
    let t = line("shoe", [-0.5, 0.0, -0.01], [0.5, 0.0, -0.01], 9);
    let hit = sweep_check(&t, &hook, &s.index, DEFAULT_PENETRATION_TOL, 8, SWEEP_RESOLUTION)
        .unwrap()
        .expect("collision");
    let expect = brute_first_hit(&t, &hook, s.shoe.cloud.points(), DEFAULT_PENETRATION_TOL, 0.001).unwrap();
    assert_eq!(hit.waypoint, expect);
    assert_eq!(hit.waypoint, 3);
    let v = evaluate_capture(&t, &hook, &s.index, &s.shoe.goal, DEFAULT_CAPTURE_RADIUS).unwrap();
    assert_eq!(v.failure_reason, Some(FailureReason::CollisionAtWaypoint { waypoint: 3 }));
}

#[test]
fn coarse_sweep_matches_fine_sweep_on_crossings() {
    let s = scene(Archetype::HighWall);
    let hook = HookModel::default();
    let cases = [
        ([-0.5, 0.0, 0.2], [0.5, 0.0, -0.05]),
        ([0.0, -0.4, 0.05], [0.0, 0.4, 0.05]),
        ([0.0, 0.0, 0.5], [0.0, 0.0, -0.2]),
        ([-0.3, -0.3, 0.1], [0.3, 0.3, 0.0]),
    ];
    for (a, b) in cases {
        let t = line("shoe", a, b, 5);
        let coarse = sweep_check(&t, &hook, &s.index, DEFAULT_PENETRATION_TOL, 4, SWEEP_RESOLUTION).unwrap();
        let fine = sweep_check(&t, &hook, &s.index, DEFAULT_PENETRATION_TOL, 4, 0.001).unwrap();
        assert!(fine.is_some());
        assert_eq!(coarse.map(|h| h.waypoint), fine.map(|h| h.waypoint), "{a:?} -> {b:?}");
    }
}

#[test]
fn planned_trajectory_captures_and_shifted_copy_misses() {
    let s = scene(Archetype::OpenBox);
    let hook = HookModel::default();
    let e = s.plan(&ExpertConfig::default()).unwrap();
    let ok = evaluate_capture(&e.trajectory, &hook, &s.index, &s.shoe.goal, DEFAULT_CAPTURE_RADIUS).unwrap();
    assert!(ok.success && ok.failure_reason.is_none());
    assert_eq!(sweep_check(&e.trajectory, &hook, &s.index, DEFAULT_PENETRATION_TOL, 7, SWEEP_RESOLUTION).unwrap(), None);

    let moved = e.trajectory.mapped(&Pose::from_translation(0.1, 0.0, 0.0), "shoe");
    let v = evaluate_capture(&moved, &hook, &s.index, &s.shoe.goal, DEFAULT_CAPTURE_RADIUS).unwrap();
    match v.failure_reason {
        Some(FailureReason::GoalMiss { distance }) => assert!((distance - 0.1).abs() < 1e-9),
        other => panic!("expected goal miss, got {other:?}"),
    }
}

#[test]
fn wide_shoe_trajectory_collides_in_narrow_throat() {
    let hook = HookModel::default();
    let wide = scene(Archetype::OpenBox);
    let narrow = scene(Archetype::NarrowThroat);
    let e = wide.plan(&ExpertConfig::default()).unwrap();
    let v = evaluate_capture(&e.trajectory, &hook, &narrow.index, &narrow.shoe.goal, DEFAULT_CAPTURE_RADIUS).unwrap();
    assert!(matches!(v.failure_reason, Some(FailureReason::CollisionAtWaypoint { .. })), "{v:?}");
}

#[test]
fn zero_capture_radius() {
    let s = scene(Archetype::LowFlat);
    let hook = HookModel::default();
    // Goal-knot placement lands exactly on the goal.
    let e = s.plan(&ExpertConfig::default()).unwrap();
    assert!(evaluate_capture(&e.trajectory, &hook, &s.index, &s.shoe.goal, 0.0).unwrap().success);
    // Spanned placement shifts the goal waypoint.
    let spanned = ExpertConfig {
        lift: LiftPlacement::Spanned,
        ..Default::default()
    };
    let e = s.plan(&spanned).unwrap();
    let tip = goal_tip(&e.trajectory, &hook).unwrap();
    assert!((tip - s.shoe.goal).norm() > 0.0);
    let v = evaluate_capture(&e.trajectory, &hook, &s.index, &s.shoe.goal, 0.0).unwrap();
    assert!(matches!(v.failure_reason, Some(FailureReason::GoalMiss { .. })), "{v:?}");
}

#[test]
fn frame_mismatch_and_short_trajectories() {
    let s = scene(Archetype::OpenBox);
    let hook = HookModel::default();
    let t = line("camera", [0.0, 0.0, 1.0], [0.0, 0.0, 1.1], 3);
    assert!(matches!(
        evaluate_capture(&t, &hook, &s.index, &s.shoe.goal, 0.02),
        Err(Error::FrameMismatch { .. })
    ));
    let one = Trajectory::new("shoe", vec![Pose::from_translation(0.0, 0.0, 1.0)]).unwrap();
    let v = evaluate_capture(&one, &hook, &s.index, &s.shoe.goal, 0.02).unwrap();
    assert_eq!(v.failure_reason, Some(FailureReason::IncompleteTrajectory));
}

#[test]
fn verdict_json_shape() {
    let v = CaptureVerdict {
        success: false,
        failure_reason: Some(FailureReason::CollisionAtWaypoint { waypoint: 4 }),
    };
    let j = serde_json::to_string(&v).unwrap();
    assert_eq!(j, r#"{"success":false,"failure_reason":{"kind":"collision-at-waypoint","waypoint":4}}"#);
}
