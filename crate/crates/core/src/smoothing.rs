//! Shortcut smoothing, arc-length resampling and the fixed-length trajectory.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{path_length, CollisionWorld, PlannerConfig, RawPath};
use crate::se3::{orthonormality_error, se3_distance, MetricWeights, Pose, REPAIR_TOL};

/// Waypoints per trajectory.
pub const DEFAULT_WAYPOINTS: usize = 9;

/// Numbers per serialized waypoint: translation then row-major rotation.
pub const WAYPOINT_DIM: usize = 12;

/// Translation lerp, shortest-arc rotation slerp.
pub fn interpolate(a: &Pose, b: &Pose, t: f64) -> Pose {
    a.interpolate(b, t.clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub iterations: usize,
    pub weights: MetricWeights,
    /// Validation resolution, meters.
    pub resolution_t: f64,
    /// Validation resolution, radians.
    pub resolution_r: f64,
    /// Greedy waypoint-pruning pass after the random shortcuts.
    pub final_prune: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self::for_planner(&PlannerConfig::default())
    }
}

impl SmoothingConfig {
    /// Same metric and half-step validation resolution as the planner.
    pub fn for_planner(cfg: &PlannerConfig) -> Self {
        Self {
            iterations: 100,
            weights: cfg.weights,
            resolution_t: 0.5 * cfg.extend_step_t,
            resolution_r: 0.5 * cfg.extend_step_r,
            final_prune: true,
        }
    }
}

fn cumulative(waypoints: &[Pose], w: &MetricWeights) -> Vec<f64> {
    let mut out = Vec::with_capacity(waypoints.len());
    let mut acc = 0.0;
    out.push(0.0);
    for p in waypoints.windows(2) {
        acc += se3_distance(&p[0], &p[1], w);
        out.push(acc);
    }
    out
}

/// Segment index and pose at arc length `s`.
fn locate(waypoints: &[Pose], cum: &[f64], s: f64) -> (usize, Pose) {
    let last = waypoints.len() - 1;
    let i = match cum.partition_point(|&c| c <= s) {
        0 => 0,
        k => (k - 1).min(last - 1),
    };
    let len = cum[i + 1] - cum[i];
    let f = if len > 0.0 { (s - cum[i]) / len } else { 0.0 };
    (i, waypoints[i].interpolate(&waypoints[i + 1], f))
}

fn dedup(mut poses: Vec<Pose>) -> Vec<Pose> {
    poses.dedup();
    poses
}

/// Random shortcutting: each iteration draws two arc-length parameters and
/// replaces the sub-path between them by a direct interpolation when that
/// segment is collision-free. Length never increases; endpoints are kept.
pub fn shortcut_smooth<R: Rng>(
    path: &RawPath,
    world: &CollisionWorld,
    cfg: &SmoothingConfig,
    rng: &mut R,
) -> RawPath {
    let (rt, rr) = (cfg.resolution_t, cfg.resolution_r);
    let free = |a: &Pose, b: &Pose| world.segment_free(a, b, rt, rr);
    let mut wps = path.waypoints.clone();

    for _ in 0..cfg.iterations {
        if wps.len() < 3 {
            break;
        }
        let cum = cumulative(&wps, &cfg.weights);
        let total = *cum.last().unwrap();
        if total <= 0.0 {
            break;
        }
        let (a, b) = (rng.gen_range(0.0..total), rng.gen_range(0.0..total));
        let (s1, s2) = if a <= b { (a, b) } else { (b, a) };
        let (i1, p1) = locate(&wps, &cum, s1);
        let (i2, p2) = locate(&wps, &cum, s2);
        if i1 == i2 {
            continue;
        }
        if world.in_collision(&p1) || !free(&wps[i1], &p1) || !free(&p1, &p2) || !free(&p2, &wps[i2 + 1]) {
            continue;
        }
        let mut next = Vec::with_capacity(wps.len());
        next.extend_from_slice(&wps[..=i1]);
        next.push(p1);
        next.push(p2);
        next.extend_from_slice(&wps[i2 + 1..]);
        let next = dedup(next);
        if path_length(&next, &cfg.weights) <= total {
            wps = next;
        }
    }

    if cfg.final_prune {
        wps = prune_waypoints(&wps, world, cfg);
    }
    RawPath {
        frame: path.frame.clone(),
        waypoints: wps,
        metadata: path.metadata.clone(),
    }
}

/// Greedy pass: from each kept waypoint jump to the farthest later waypoint
/// reachable by a collision-free straight segment.
pub fn prune_waypoints(wps: &[Pose], world: &CollisionWorld, cfg: &SmoothingConfig) -> Vec<Pose> {
    if wps.len() < 3 {
        return wps.to_vec();
    }
    let mut out = vec![wps[0]];
    let mut i = 0;
    while i < wps.len() - 1 {
        let j = (i + 2..wps.len())
            .rev()
            .find(|&j| world.segment_free(&wps[i], &wps[j], cfg.resolution_t, cfg.resolution_r))
            .unwrap_or(i + 1);
        out.push(wps[j]);
        i = j;
    }
    if path_length(&out, &cfg.weights) <= path_length(wps, &cfg.weights) {
        out
    } else {
        wps.to_vec()
    }
}

/// `n` poses at equal arc-length increments; first and last are the path ends.
pub fn resample_waypoints(waypoints: &[Pose], n: usize, w: &MetricWeights) -> Result<Vec<Pose>> {
    if waypoints.is_empty() {
        return Err(Error::EmptyPath);
    }
    if n < 2 {
        return Err(Error::InvalidConfig("resampling needs n >= 2".into()));
    }
    let cum = cumulative(waypoints, w);
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    let mut out = Vec::with_capacity(n);
    out.push(waypoints[0]);
    for k in 1..n - 1 {
        out.push(locate(waypoints, &cum, total * k as f64 / (n - 1) as f64).1);
    }
    out.push(*waypoints.last().unwrap());
    Ok(out)
}

/// Like [`resample_waypoints`], but a zero-length path yields `n` copies of its pose.
pub fn resample_or_repeat(waypoints: &[Pose], n: usize, w: &MetricWeights) -> Result<Vec<Pose>> {
    match resample_waypoints(waypoints, n, w) {
        Err(Error::DegeneratePath) => Ok(vec![waypoints[0]; n]),
        other => other,
    }
}

/// Fixed-length waypoint sequence in a named frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    frame: String,
    waypoints: Vec<Pose>,
}

impl Trajectory {
    pub fn new(frame: impl Into<String>, waypoints: Vec<Pose>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::EmptyPath);
        }
        Ok(Self {
            frame: frame.into(),
            waypoints,
        })
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn waypoints(&self) -> &[Pose] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Left-multiplies every waypoint by `t` and relabels the frame.
    pub fn mapped(&self, t: &Pose, frame: impl Into<String>) -> Trajectory {
        Trajectory {
            frame: frame.into(),
            waypoints: self.waypoints.iter().map(|w| t.compose(w)).collect(),
        }
    }

    /// `[x, y, z, r11, r12, ..., r33]` per waypoint.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * WAYPOINT_DIM);
        for w in &self.waypoints {
            out.extend(w.translation().iter());
            let r = w.rotation();
            for i in 0..3 {
                for j in 0..3 {
                    out.push(r[(i, j)]);
                }
            }
        }
        out
    }

    /// Inverse of [`Trajectory::to_flat`] for exactly `n` waypoints.
    pub fn from_flat(frame: impl Into<String>, flat: &[f64], n: usize) -> Result<Self> {
        if n == 0 || flat.len() != n * WAYPOINT_DIM {
            return Err(Error::BadLength {
                expected: n * WAYPOINT_DIM,
                got: flat.len(),
            });
        }
        let waypoints = flat
            .chunks_exact(WAYPOINT_DIM)
            .map(|c| {
                let t = Vector3::new(c[0], c[1], c[2]);
                let r = Matrix3::from_row_slice(&c[3..]);
                let err = orthonormality_error(&r);
                if !(err <= REPAIR_TOL) {
                    return Err(Error::NotRotation(err));
                }
                Pose::new_repaired(r, t)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(frame, waypoints)
    }

    /// Flat little-endian f64 encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_flat().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(frame: impl Into<String>, bytes: &[u8], n: usize) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(Error::BadLength {
                expected: n * WAYPOINT_DIM,
                got: bytes.len() / 8,
            });
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_flat(frame, &flat, n)
    }
}

#[derive(Serialize, Deserialize)]
struct WaypointJson {
    t: [f64; 3],
    r: [f64; 9],
}

#[derive(Serialize, Deserialize)]
struct TrajectoryJson {
    frame: String,
    n: usize,
    waypoints: Vec<WaypointJson>,
}

impl Serialize for Trajectory {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let waypoints = self
            .to_flat()
            .chunks_exact(WAYPOINT_DIM)
            .map(|c| WaypointJson {
                t: c[..3].try_into().unwrap(),
                r: c[3..].try_into().unwrap(),
            })
            .collect();
        TrajectoryJson {
            frame: self.frame.clone(),
            n: self.len(),
            waypoints,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TrajectoryJson::deserialize(d)?;
        let flat: Vec<f64> = j
            .waypoints
            .iter()
            .flat_map(|w| w.t.iter().chain(w.r.iter()).copied())
            .collect();
        Trajectory::from_flat(j.frame, &flat, j.n).map_err(de::Error::custom)
    }
}
