//! Parametric stand-ins for scanned shoes and the J-hook tool.
//!
//! Shoes are hollow shells built from axis-aligned slabs (floor, four walls,
//! a roof with an opening) whose surfaces are sampled on a grid. Each
//! archetype comes with an interior goal point where the hook should rest.
//! Clouds are re-centred so the shoe frame origin is the cloud centroid, with
//! x along the heel-to-toe axis and z up.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{centroid, PointCloud};

pub const SHOE_FRAME: &str = "shoe";
pub const TOOL_FRAME: &str = "tool";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    OpenBox,
    HighWall,
    NarrowThroat,
    LowFlat,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [
        Archetype::OpenBox,
        Archetype::HighWall,
        Archetype::NarrowThroat,
        Archetype::LowFlat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::OpenBox => "open-box",
            Archetype::HighWall => "high-wall",
            Archetype::NarrowThroat => "narrow-throat",
            Archetype::LowFlat => "low-flat",
        }
    }

    /// Default dimensions and goal for the archetype.
    pub fn default_params(self) -> ShoeParams {
        let base = ShoeParams {
            length: 0.28,
            width: 0.10,
            height: 0.10,
            wall: 0.01,
            opening: None,
            goal: [0.07, 0.05, 0.03],
            spacing: 0.002,
            jitter: 0.0002,
        };
        match self {
            Archetype::OpenBox => base,
            Archetype::HighWall => ShoeParams {
                height: 0.18,
                opening: Some(Opening {
                    x: [0.01, 0.13],
                    y: [0.01, 0.09],
                }),
                ..base
            },
            Archetype::NarrowThroat => ShoeParams {
                length: 0.26,
                width: 0.09,
                height: 0.11,
                opening: Some(Opening {
                    x: [0.05, 0.12],
                    y: [0.02, 0.07],
                }),
                goal: [0.085, 0.045, 0.035],
                ..base
            },
            Archetype::LowFlat => ShoeParams {
                length: 0.24,
                width: 0.085,
                height: 0.05,
                goal: [0.06, 0.0425, 0.025],
                ..base
            },
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown archetype '{s}'")))
    }
}

/// Roof opening, in the un-centred box coordinates (heel corner at the origin).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Opening {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

/// Box-shell dimensions in meters. `opening: None` leaves the top fully open.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShoeParams {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub wall: f64,
    pub opening: Option<Opening>,
    /// Goal point in un-centred box coordinates.
    pub goal: [f64; 3],
    /// Surface sampling pitch.
    pub spacing: f64,
    /// Uniform per-coordinate noise amplitude.
    pub jitter: f64,
}

impl ShoeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.wall < 0.005 {
            return bad(format!("shell thickness {} m is below 5 mm", self.wall));
        }
        if !(self.spacing > 0.0 && self.spacing <= 0.002) {
            return bad(format!("surface spacing {} m must lie in (0, 2 mm]", self.spacing));
        }
        if !(self.jitter >= 0.0 && self.jitter < 0.5 * self.spacing) {
            return bad("jitter must be non-negative and below half the spacing".into());
        }
        let t = self.wall;
        if self.length <= 2.0 * t || self.width <= 2.0 * t || self.height <= 2.0 * t {
            return bad("box is too small for its walls".into());
        }
        if let Some(o) = self.opening {
            let ok = o.x[0] >= t - 1e-12
                && o.x[1] <= self.length - t + 1e-12
                && o.y[0] >= t - 1e-12
                && o.y[1] <= self.width - t + 1e-12
                && o.x[1] >= o.x[0]
                && o.y[1] >= o.y[0];
            if !ok {
                return bad("opening must lie inside the cavity footprint with size >= 0".into());
            }
        }
        let g = self.goal;
        let inside = g[0] > t && g[0] < self.length - t && g[1] > t && g[1] < self.width - t && g[2] > t && g[2] < self.height - t;
        if !inside {
            return bad("goal must lie inside the cavity".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticShoe {
    pub archetype: Archetype,
    pub params: ShoeParams,
    /// Shoe-frame cloud (origin at its centroid).
    pub cloud: PointCloud,
    /// Shoe-frame goal point.
    pub goal: Point3<f64>,
    /// Shift applied to the box coordinates to centre the cloud.
    pub offset: Vector3<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Slab {
    lo: [f64; 3],
    hi: [f64; 3],
}

fn shell_slabs(p: &ShoeParams) -> Vec<Slab> {
    let (l, w, h, t) = (p.length, p.width, p.height, p.wall);
    let mut slabs = vec![
        Slab { lo: [0.0, 0.0, 0.0], hi: [l, w, t] },
        Slab { lo: [0.0, 0.0, 0.0], hi: [t, w, h] },
        Slab { lo: [l - t, 0.0, 0.0], hi: [l, w, h] },
        Slab { lo: [0.0, 0.0, 0.0], hi: [l, t, h] },
        Slab { lo: [0.0, w - t, 0.0], hi: [l, w, h] },
    ];
    let (ox, oy) = match p.opening {
        None => ([t, l - t], [t, w - t]),
        Some(o) => (o.x, o.y),
    };
    let z = [h - t, h];
    // roof around the opening
    let roof = [
        Slab { lo: [0.0, 0.0, z[0]], hi: [ox[0], w, z[1]] },
        Slab { lo: [ox[1], 0.0, z[0]], hi: [l, w, z[1]] },
        Slab { lo: [ox[0], 0.0, z[0]], hi: [ox[1], oy[0], z[1]] },
        Slab { lo: [ox[0], oy[1], z[0]], hi: [ox[1], w, z[1]] },
    ];
    slabs.extend(roof.into_iter().filter(|s| (0..3).all(|k| s.hi[k] - s.lo[k] > 1e-9)));
    slabs
}

fn grid(lo: f64, hi: f64, spacing: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
    (0..=n).map(move |i| lo + (hi - lo) * i as f64 / n as f64)
}

fn sample_slab(s: &Slab, spacing: f64, out: &mut Vec<Point3<f64>>) {
    for axis in 0..3 {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        for face in [s.lo[axis], s.hi[axis]] {
            for u in grid(s.lo[a], s.hi[a], spacing) {
                for v in grid(s.lo[b], s.hi[b], spacing) {
                    let mut p = [0.0; 3];
                    p[axis] = face;
                    p[a] = u;
                    p[b] = v;
                    out.push(Point3::from(p));
                }
            }
        }
    }
}

/// Builds the shell cloud and goal point for an archetype.
pub fn generate_synthetic_shoe<R: Rng>(archetype: Archetype, params: &ShoeParams, rng: &mut R) -> Result<SyntheticShoe> {
    params.validate()?;
    let mut pts = vec![];
    for s in shell_slabs(params) {
        sample_slab(&s, params.spacing, &mut pts);
    }
    if params.jitter > 0.0 {
        let j = params.jitter;
        for p in &mut pts {
            for k in 0..3 {
                p[k] += rng.gen_range(-j..j);
            }
        }
    }
    // heel dark, toe bright
    let intensities: Vec<f64> = pts
        .iter()
        .map(|p| (0.25 + 0.5 * p.x / params.length).clamp(0.0, 1.0))
        .collect();
    let raw = PointCloud::new(pts, SHOE_FRAME)?;
    let offset = -centroid(&raw)?.coords;
    let points = raw.points().iter().map(|p| p + offset).collect();
    let cloud = PointCloud::new(points, SHOE_FRAME)?.with_intensities(intensities)?;
    let goal = Point3::from(params.goal) + offset;
    Ok(SyntheticShoe {
        archetype,
        params: *params,
        cloud,
        goal,
        offset,
    })
}

/// J-shaped hook in its tool frame.
///
/// The tool origin is the tip: the lowest point of the bend, where the
/// object rests once hooked. The bend lies in the tool x-z plane, opening
/// toward +z; the shaft rises from its −x side.
#[derive(Clone, Debug)]
pub struct HookModel {
    pub cloud: PointCloud,
    pub tip: Point3<f64>,
    pub shaft_length: f64,
    pub radius: f64,
}

impl HookModel {
    pub fn j_hook(shaft_length: f64, radius: f64, spacing: f64) -> Result<Self> {
        if !(shaft_length > 0.0 && radius > 0.0 && spacing > 0.0) {
            return Err(Error::InvalidParams("hook dimensions must be positive".into()));
        }
        let mut pts = vec![];
        let arc_n = ((PI * radius) / spacing).ceil() as usize;
        for i in 0..=arc_n {
            let a = -PI * i as f64 / arc_n as f64;
            pts.push(Point3::new(radius * a.cos(), 0.0, radius + radius * a.sin()));
        }
        let shaft_n = (shaft_length / spacing).ceil() as usize;
        for i in 1..=shaft_n {
            pts.push(Point3::new(-radius, 0.0, radius + shaft_length * i as f64 / shaft_n as f64));
        }
        Ok(Self {
            cloud: PointCloud::new(pts, TOOL_FRAME)?,
            tip: Point3::origin(),
            shaft_length,
            radius,
        })
    }

    /// Farthest hook point from the tool origin.
    pub fn reach(&self) -> f64 {
        self.cloud.points().iter().map(|p| p.coords.norm()).fold(0.0, f64::max)
    }
}

impl Default for HookModel {
    fn default() -> Self {
        Self::j_hook(0.15, 0.02, 0.002).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{min_distance, SpatialIndex};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shoe(a: Archetype, seed: u64) -> SyntheticShoe {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_synthetic_shoe(a, &a.default_params(), &mut rng).unwrap()
    }

    #[test]
    fn open_box_dimensions() {
        let s = shoe(Archetype::OpenBox, 0);
        let (lo, hi) = s.cloud.bounds().unwrap();
        let ext = hi - lo;
        assert!((ext.x - 0.28).abs() < 1e-3);
        assert!((ext.y - 0.10).abs() < 1e-3);
        assert!((ext.z - 0.10).abs() < 1e-3);
    }

    #[test]
    fn goals_are_interior() {
        for a in Archetype::ALL {
            let s = shoe(a, 1);
            let idx = SpatialIndex::build(&s.cloud);
            let g = PointCloud::new(vec![s.goal], SHOE_FRAME).unwrap();
            let d = min_distance(&idx, &g).unwrap();
            assert!(d >= 0.01, "{a}: goal clearance {d}");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = shoe(Archetype::NarrowThroat, 5);
        let b = shoe(Archetype::NarrowThroat, 5);
        assert_eq!(a.cloud, b.cloud);
        assert_ne!(a.cloud, shoe(Archetype::NarrowThroat, 6).cloud);
    }

    #[test]
    fn surface_density() {
        // every point of a dense reference sampling of the box has a shell point within 2 mm
        let s = shoe(Archetype::OpenBox, 2);
        let idx = SpatialIndex::build(&s.cloud);
        let p = s.params;
        let mut probes = vec![];
        for i in 0..=56 {
            for k in 0..=20 {
                let x = p.length * i as f64 / 56.0;
                let z = p.height * k as f64 / 20.0;
                probes.push(Point3::new(x, 0.0, z) + s.offset);
            }
        }
        for q in probes {
            assert!(idx.nearest_sq(&q).unwrap().sqrt() <= 0.002, "sparse near {q:?}");
        }
    }

    #[test]
    fn centred_cloud() {
        let s = shoe(Archetype::HighWall, 3);
        assert!(centroid(&s.cloud).unwrap().coords.norm() < 1e-12);
    }

    #[test]
    fn rejects_thin_walls() {
        let mut p = Archetype::OpenBox.default_params();
        p.wall = 0.004;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_synthetic_shoe(Archetype::OpenBox, &p, &mut rng),
            Err(Error::InvalidParams(_))
        ));
        let mut p = Archetype::OpenBox.default_params();
        p.goal = [0.5, 0.05, 0.03];
        assert!(generate_synthetic_shoe(Archetype::OpenBox, &p, &mut rng).is_err());
    }

    #[test]
    fn hook_geometry() {
        let h = HookModel::default();
        assert_eq!(h.tip, Point3::origin());
        let (lo, hi) = h.cloud.bounds().unwrap();
        assert!((hi.z - 0.17).abs() < 1e-12);
        assert!(lo.z.abs() < 1e-12);
        assert!((hi.x - lo.x - 0.04).abs() < 1e-12);
        for w in h.cloud.points().windows(2) {
            assert!((w[0] - w[1]).norm() <= 0.0021);
        }
    }

    #[test]
    fn archetype_names_round_trip() {
        for a in Archetype::ALL {
            assert_eq!(a.name().parse::<Archetype>().unwrap(), a);
        }
        assert!("boot".parse::<Archetype>().is_err());
    }
}
