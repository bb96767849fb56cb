//! Bidirectional RRT over SE(3) for the hook end effector.
//!
//! Two trees grow from the start and goal poses. Each iteration extends the
//! active tree one step toward a target (a uniform SE(3) sample, or with
//! probability `goal_bias` the other tree's newest node), then greedily
//! connects the other tree toward the new node. Every edge is validated at
//! half-step resolution against the obstacle cloud with a clearance margin.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{PointCloud, SpatialIndex};
use crate::se3::{angle_between, sample_so3_uniform, se3_distance, MetricWeights, Pose};

/// Height of the lift waypoint above the goal, meters along shoe-frame z.
pub const LIFT_HEIGHT: f64 = 0.20;

/// Margin added around the obstacle bounds when sampling, meters per axis.
pub const BOUNDS_MARGIN: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Bounds {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = pts.into_iter();
        let first = *it.next()?;
        Some(it.fold(Self::new(first, first), |b, p| Self {
            min: b.min.inf(p),
            max: b.max.sup(p),
        }))
    }

    pub fn inflated(&self, margin: f64) -> Self {
        let m = Vector3::repeat(margin);
        Self::new(self.min - m, self.max + m)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn union(&self, other: &Bounds) -> Self {
        Self::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vector3<f64> {
        Vector3::from_fn(|k, _| {
            if self.max[k] > self.min[k] {
                rng.gen_range(self.min[k]..self.max[k])
            } else {
                self.min[k]
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub goal_bias: f64,
    pub max_iterations: usize,
    /// Meters per extension step.
    pub extend_step_t: f64,
    /// Radians per extension step.
    pub extend_step_r: f64,
    /// Minimum allowed hook-to-obstacle distance, meters.
    pub clearance_eps: f64,
    pub weights: MetricWeights,
    /// Translation sampling box; `None` means obstacle bounds inflated by 0.3 m.
    pub sampling_bounds: Option<Bounds>,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            goal_bias: 0.10,
            max_iterations: 20_000,
            extend_step_t: 0.02,
            extend_step_r: 0.10,
            clearance_eps: 0.005,
            weights: MetricWeights::default(),
            sampling_bounds: None,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return bad("goal_bias must lie in [0, 1]");
        }
        if !(self.extend_step_t > 0.0 && self.extend_step_r > 0.0) {
            return bad("extension steps must be positive");
        }
        if !(self.clearance_eps > 0.0) {
            return bad("clearance_eps must be positive");
        }
        if !(self.weights.translation > 0.0 && self.weights.rotation > 0.0) {
            return bad("metric weights must be positive");
        }
        Ok(())
    }

    /// Sampling box for a problem: configured, or obstacle/endpoint bounds plus margin.
    pub fn resolve_bounds(&self, start: &Pose, goal: &Pose, obstacle: &SpatialIndex) -> Result<Bounds> {
        let ends = Bounds::from_points([start.translation(), goal.translation()]).unwrap();
        let bounds = match self.sampling_bounds {
            Some(b) => b,
            None => match obstacle.bounds() {
                Some((lo, hi)) => Bounds::new(lo.coords, hi.coords).inflated(BOUNDS_MARGIN),
                None => ends.inflated(BOUNDS_MARGIN),
            },
        };
        if !bounds.contains(start.translation()) || !bounds.contains(goal.translation()) {
            return Err(Error::InvalidConfig(
                "sampling bounds must contain start and goal translations".into(),
            ));
        }
        Ok(bounds)
    }
}

/// The hook cloud in its tool frame plus an indexed obstacle, with a clearance margin.
#[derive(Clone, Debug)]
pub struct CollisionWorld {
    hook: Vec<Point3<f64>>,
    obstacle: SpatialIndex,
    clearance: f64,
}

impl CollisionWorld {
    pub fn new(hook: &PointCloud, obstacle: &PointCloud, clearance: f64) -> Result<Self> {
        if hook.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(Self::with_index(hook, SpatialIndex::build(obstacle), clearance))
    }

    pub fn with_index(hook: &PointCloud, obstacle: SpatialIndex, clearance: f64) -> Self {
        Self {
            hook: hook.points().to_vec(),
            obstacle,
            clearance,
        }
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn obstacle(&self) -> &SpatialIndex {
        &self.obstacle
    }

    /// An empty obstacle never collides.
    pub fn in_collision(&self, pose: &Pose) -> bool {
        self.hook
            .iter()
            .any(|p| self.obstacle.any_within(&pose.transform_point(p), self.clearance))
    }

    /// Checks the interpolated segment `a → b` at the given resolution, excluding `a`.
    pub fn segment_free(&self, a: &Pose, b: &Pose, res_t: f64, res_r: f64) -> bool {
        let n = segment_samples(a, b, res_t, res_r);
        (1..=n).all(|i| !self.in_collision(&a.interpolate(b, i as f64 / n as f64)))
    }
}

/// Number of equal sub-steps so each moves at most `res_t` meters and `res_r` radians.
pub fn segment_samples(a: &Pose, b: &Pose, res_t: f64, res_r: f64) -> usize {
    let dt = (a.translation() - b.translation()).norm();
    let dr = angle_between(a.rotation(), b.rotation());
    ((dt / res_t).max(dr / res_r).ceil() as usize).max(1)
}

/// `true` iff `min_distance(obstacle, hook transformed by candidate) < clearance_eps`.
pub fn pose_in_collision(
    hook: &PointCloud,
    obstacle: &SpatialIndex,
    candidate: &Pose,
    clearance_eps: f64,
) -> Result<bool> {
    if hook.is_empty() || obstacle.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(hook
        .points()
        .iter()
        .any(|p| obstacle.any_within(&candidate.transform_point(p), clearance_eps)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeRoot {
    Start,
    Goal,
}

#[derive(Clone, Debug)]
pub struct RrtTree {
    pub nodes: Vec<Pose>,
    pub parent: Vec<Option<usize>>,
    pub root: TreeRoot,
}

impl RrtTree {
    fn new(root_pose: Pose, root: TreeRoot) -> Self {
        Self {
            nodes: vec![root_pose],
            parent: vec![None],
            root,
        }
    }

    fn push(&mut self, pose: Pose, parent: usize) -> usize {
        self.nodes.push(pose);
        self.parent.push(Some(parent));
        self.nodes.len() - 1
    }

    fn nearest(&self, target: &Pose, w: &MetricWeights) -> usize {
        let mut best = f64::INFINITY;
        let mut best_i = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            let dt = w.translation * (n.translation() - target.translation()).norm();
            if dt >= best {
                continue;
            }
            let d = dt + w.rotation * angle_between(n.rotation(), target.rotation());
            if d < best {
                best = d;
                best_i = i;
            }
        }
        best_i
    }

    /// Poses from the root to `idx`, root first.
    fn branch(&self, mut idx: usize) -> Vec<Pose> {
        let mut out = vec![self.nodes[idx]];
        while let Some(p) = self.parent[idx] {
            out.push(self.nodes[p]);
            idx = p;
        }
        out.reverse();
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanMetadata {
    pub iterations: usize,
    pub start_tree_size: usize,
    pub goal_tree_size: usize,
    pub seed: u64,
}

/// Collision-free waypoint sequence from start to goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPath {
    pub frame: String,
    pub waypoints: Vec<Pose>,
    pub metadata: PlanMetadata,
}

/// Extension target selection: the other tree's newest node with probability
/// `goal_bias`, otherwise a uniform SE(3) sample.
#[derive(Clone, Copy, Debug)]
pub struct TargetSampler {
    pub bounds: Bounds,
    pub goal_bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Biased,
    Random(Pose),
}

impl TargetSampler {
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Target {
        if rng.gen::<f64>() < self.goal_bias {
            Target::Biased
        } else {
            let t = self.bounds.sample(rng);
            Target::Random(Pose::from_parts(sample_so3_uniform(rng), t))
        }
    }
}

#[derive(Debug, PartialEq)]
enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

struct Search<'a> {
    world: &'a CollisionWorld,
    cfg: &'a PlannerConfig,
}

impl Search<'_> {
    /// Moves at most one step from `from` toward `to`.
    fn steer(&self, from: &Pose, to: &Pose) -> (Pose, bool) {
        let dt = (from.translation() - to.translation()).norm();
        let dr = angle_between(from.rotation(), to.rotation());
        let mut f: f64 = 1.0;
        if dt > self.cfg.extend_step_t {
            f = f.min(self.cfg.extend_step_t / dt);
        }
        if dr > self.cfg.extend_step_r {
            f = f.min(self.cfg.extend_step_r / dr);
        }
        if f >= 1.0 {
            (*to, true)
        } else {
            (from.interpolate(to, f), false)
        }
    }

    fn edge_free(&self, a: &Pose, b: &Pose) -> bool {
        self.world
            .segment_free(a, b, 0.5 * self.cfg.extend_step_t, 0.5 * self.cfg.extend_step_r)
    }

    fn extend(&self, tree: &mut RrtTree, target: &Pose) -> Extend {
        let near = tree.nearest(target, &self.cfg.weights);
        let from = tree.nodes[near];
        let (q, reached) = self.steer(&from, target);
        if !self.edge_free(&from, &q) {
            return Extend::Trapped;
        }
        let idx = tree.push(q, near);
        if reached {
            Extend::Reached(idx)
        } else {
            Extend::Advanced(idx)
        }
    }

    fn connect(&self, tree: &mut RrtTree, target: &Pose) -> Extend {
        loop {
            match self.extend(tree, target) {
                Extend::Advanced(_) => continue,
                other => return other,
            }
        }
    }
}

/// Plans a collision-free path from `start` to `goal` for the hook among `obstacle`.
///
/// The result is a pure function of the inputs and `cfg.seed`.
pub fn plan(
    start: &Pose,
    goal: &Pose,
    hook: &PointCloud,
    obstacle: &PointCloud,
    cfg: &PlannerConfig,
) -> Result<RawPath> {
    let world = CollisionWorld::new(hook, obstacle, cfg.clearance_eps)?;
    plan_in(start, goal, &world, cfg, obstacle.frame())
}

/// [`plan`] against a prebuilt collision world.
pub fn plan_in(
    start: &Pose,
    goal: &Pose,
    world: &CollisionWorld,
    cfg: &PlannerConfig,
    frame: &str,
) -> Result<RawPath> {
    cfg.validate()?;
    let bounds = cfg.resolve_bounds(start, goal, world.obstacle())?;
    if world.in_collision(start) {
        return Err(Error::StartInCollision);
    }
    if world.in_collision(goal) {
        return Err(Error::GoalInCollision);
    }
    let done = |waypoints: Vec<Pose>, iterations: usize, a: &RrtTree, b: &RrtTree| {
        let (s, g) = if a.root == TreeRoot::Start { (a, b) } else { (b, a) };
        RawPath {
            frame: frame.to_string(),
            waypoints,
            metadata: PlanMetadata {
                iterations,
                start_tree_size: s.nodes.len(),
                goal_tree_size: g.nodes.len(),
                seed: cfg.seed,
            },
        }
    };

    let mut ta = RrtTree::new(*start, TreeRoot::Start);
    let mut tb = RrtTree::new(*goal, TreeRoot::Goal);
    if start == goal {
        return Ok(done(vec![*start], 0, &ta, &tb));
    }

    let search = Search { world, cfg };
    let sampler = TargetSampler {
        bounds,
        goal_bias: cfg.goal_bias,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for iter in 1..=cfg.max_iterations {
        let target = match sampler.draw(&mut rng) {
            Target::Biased => *tb.nodes.last().unwrap(),
            Target::Random(p) => p,
        };
        let new_idx = match search.extend(&mut ta, &target) {
            Extend::Reached(i) | Extend::Advanced(i) => Some(i),
            Extend::Trapped => None,
        };
        if let Some(ia) = new_idx {
            let q = ta.nodes[ia];
            if let Extend::Reached(ib) = search.connect(&mut tb, &q) {
                let mut from_a = ta.branch(ia);
                let mut from_b = tb.branch(ib);
                // both branches end at the shared pose q
                from_b.pop();
                from_b.reverse();
                from_a.extend(from_b);
                if ta.root == TreeRoot::Goal {
                    from_a.reverse();
                }
                return Ok(done(from_a, iter, &ta, &tb));
            }
        }
        std::mem::swap(&mut ta, &mut tb);
    }
    Err(Error::BudgetExhausted(cfg.max_iterations))
}

/// Appends a waypoint `LIFT_HEIGHT` above the final pose, keeping its rotation.
pub fn append_lift_waypoint(path: &RawPath) -> Result<RawPath> {
    let goal = path.waypoints.last().ok_or(Error::EmptyPath)?;
    let lift = goal.with_translation(goal.translation() + Vector3::new(0.0, 0.0, LIFT_HEIGHT));
    let mut out = path.clone();
    out.waypoints.push(lift);
    Ok(out)
}

/// Total SE(3) length of a waypoint chain.
pub fn path_length(waypoints: &[Pose], w: &MetricWeights) -> f64 {
    waypoints.windows(2).map(|p| se3_distance(&p[0], &p[1], w)).sum()
}
