//! Point clouds, an exact k-d tree for distance queries, and PCA.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::se3::Pose;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    intensities: Option<Vec<f64>>,
    frame: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>, frame: impl Into<String>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinitePoint(i));
        }
        Ok(Self {
            points,
            intensities: None,
            frame: frame.into(),
        })
    }

    pub fn with_intensities(mut self, intensities: Vec<f64>) -> Result<Self> {
        if intensities.len() != self.points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} intensities for {} points",
                intensities.len(),
                self.points.len()
            )));
        }
        if intensities.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParams("intensity outside [0, 1]".into()));
        }
        self.intensities = Some(intensities);
        Ok(self)
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn intensities(&self) -> Option<&[f64]> {
        self.intensities.as_deref()
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn set_frame(&mut self, frame: impl Into<String>) {
        self.frame = frame.into();
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps every point by `t`, relabelling the cloud as `frame`.
    pub fn transformed(&self, t: &Pose, frame: impl Into<String>) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.transform_point(p)).collect(),
            intensities: self.intensities.clone(),
            frame: frame.into(),
        }
    }

    pub fn scaled(&self, factor: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| p * factor).collect(),
            intensities: self.intensities.clone(),
            frame: self.frame.clone(),
        }
    }

    /// Axis-aligned bounds `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        bounds_of(&self.points)
    }
}

pub(crate) fn bounds_of(points: &[Point3<f64>]) -> Option<(Point3<f64>, Point3<f64>)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some((lo, hi))
}

pub fn transform_cloud(c: &PointCloud, t: &Pose, frame: impl Into<String>) -> PointCloud {
    c.transformed(t, frame)
}

pub fn centroid(c: &PointCloud) -> Result<Point3<f64>> {
    if c.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let sum = c.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Ok(Point3::from(sum / c.len() as f64))
}

/// Sample covariance about the centroid.
pub fn covariance(c: &PointCloud) -> Result<Matrix3<f64>> {
    let mean = centroid(c)?.coords;
    let mut cov = Matrix3::zeros();
    for p in &c.points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    Ok(cov / c.len() as f64)
}

/// Unit eigenvector of the covariance with the largest eigenvalue.
///
/// The sign is chosen so the largest-magnitude component is positive. Fails
/// when the top two eigenvalues are within 1e-9 (relative) of each other.
pub fn principal_axis(c: &PointCloud) -> Result<Vector3<f64>> {
    if c.len() < 2 {
        return Err(Error::DegenerateCloud("need at least two points".into()));
    }
    let cov = covariance(c)?;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if l1 <= 0.0 {
        return Err(Error::DegenerateCloud("all points coincide".into()));
    }
    if l1 - l2 < 1e-9 * l1 {
        return Err(Error::DegenerateCloud(format!(
            "top eigenvalues {l1:.3e} and {l2:.3e} are indistinguishable"
        )));
    }
    let axis = eig.eigenvectors.column(order[0]).normalize();
    Ok(canonical_sign(axis))
}

fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let k = v.iamax();
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

const LEAF_SIZE: usize = 12;

#[derive(Clone, Debug)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: u32,
    end: u32,
    // children; `u32::MAX` marks a leaf
    left: u32,
    right: u32,
}

/// Immutable k-d tree over a point cloud.
///
/// Nearest-neighbour and radius queries are exact: pruning only discards
/// boxes whose lower bound already exceeds the best candidate.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    nodes: Vec<Node>,
    frame: String,
}

#[inline]
fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn box_dist_sq(q: &[f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
    let mut acc = 0.0;
    for k in 0..3 {
        let d = if q[k] < lo[k] {
            lo[k] - q[k]
        } else if q[k] > hi[k] {
            q[k] - hi[k]
        } else {
            0.0
        };
        acc += d * d;
    }
    acc
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        let mut points: Vec<[f64; 3]> = cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            let n = points.len();
            build_node(&mut points, 0, n, &mut nodes);
        }
        Self {
            points,
            nodes,
            frame: cloud.frame.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        self.nodes
            .first()
            .map(|n| (Point3::from(n.lo), Point3::from(n.hi)))
    }

    /// Squared distance to the nearest indexed point.
    pub fn nearest_sq(&self, q: &Point3<f64>) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = f64::INFINITY;
        self.nearest_rec(0, &q, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, idx: usize, q: &[f64; 3], best: &mut f64) {
        let node = &self.nodes[idx];
        if node.left == u32::MAX {
            for p in &self.points[node.start as usize..node.end as usize] {
                let d = dist_sq(p, q);
                if d < *best {
                    *best = d;
                }
            }
            return;
        }
        let (l, r) = (node.left as usize, node.right as usize);
        let dl = box_dist_sq(q, &self.nodes[l].lo, &self.nodes[l].hi);
        let dr = box_dist_sq(q, &self.nodes[r].lo, &self.nodes[r].hi);
        let (first, d1, second, d2) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
        if d1 < *best {
            self.nearest_rec(first, q, best);
        }
        if d2 < *best {
            self.nearest_rec(second, q, best);
        }
    }

    /// True iff some indexed point lies strictly closer than `radius`.
    pub fn any_within(&self, q: &Point3<f64>, radius: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let q = [q.x, q.y, q.z];
        self.within_rec(0, &q, radius)
    }

    fn within_rec(&self, idx: usize, q: &[f64; 3], radius: f64) -> bool {
        let node = &self.nodes[idx];
        // sqrt is monotone, so comparing in distance space matches `min_distance < radius`
        if box_dist_sq(q, &node.lo, &node.hi).sqrt() >= radius {
            return false;
        }
        if node.left == u32::MAX {
            return self.points[node.start as usize..node.end as usize]
                .iter()
                .any(|p| dist_sq(p, q).sqrt() < radius);
        }
        self.within_rec(node.left as usize, q, radius) || self.within_rec(node.right as usize, q, radius)
    }
}

fn build_node(points: &mut [[f64; 3]], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let slice = &points[start..end];
    let mut lo = slice[0];
    let mut hi = slice[0];
    for p in slice {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let idx = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        start: start as u32,
        end: end as u32,
        left: u32::MAX,
        right: u32::MAX,
    });
    if end - start <= LEAF_SIZE {
        return idx as u32;
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = (end - start) / 2;
    points[start..end].select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    let left = build_node(points, start, start + mid, nodes);
    let right = build_node(points, start + mid, end, nodes);
    nodes[idx].left = left;
    nodes[idx].right = right;
    idx as u32
}

/// Exact minimum Euclidean distance between the indexed cloud and `b`.
pub fn min_distance(a: &SpatialIndex, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let best = b
        .points
        .iter()
        .map(|p| a.nearest_sq(p).unwrap())
        .fold(f64::INFINITY, f64::min);
    Ok(best.sqrt())
}
