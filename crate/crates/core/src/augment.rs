//! Re-capturing a sample from a perturbed camera.
//!
//! The new camera C' is obtained from C by a rotation about x (`theta`), a
//! rotation about y (`phi`) and a displacement `delta_z` along the optical
//! axis toward the scene. Geometry and depth are transformed exactly; the
//! gray image is approximated by a scale about the principal point followed
//! by an integer shift.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthImage, GrayImage, Raster};
use crate::se3::{rot_x, rot_y, CameraIntrinsics, Pose};
use crate::smoothing::Trajectory;

pub const CAMERA_FRAME: &str = "camera";
/// Smallest shoe depth the gray scaling accepts.
pub const MIN_SCALED_DEPTH: f64 = 0.05;
pub const REJECTION_BUDGET: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    pub theta: f64,
    pub phi: f64,
    pub delta_z: f64,
}

impl AugmentationParams {
    pub const IDENTITY: AugmentationParams = AugmentationParams {
        theta: 0.0,
        phi: 0.0,
        delta_z: 0.0,
    };

    pub fn new(theta: f64, phi: f64, delta_z: f64) -> Result<Self> {
        if !(theta.is_finite() && phi.is_finite() && delta_z.is_finite()) {
            return Err(Error::InvalidParams("augmentation parameters must be finite".into()));
        }
        Ok(Self { theta, phi, delta_z })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleTuple {
    pub gray: GrayImage,
    pub depth: DepthImage,
    /// Camera-frame waypoints.
    pub trajectory: Trajectory,
    /// T_C_S: shoe frame to camera frame.
    pub shoe_pose: Pose,
    pub intrinsics: CameraIntrinsics,
    /// Shoe-frame bounding box, used for the field-of-view check when present.
    pub shoe_bounds: Option<(Point3<f64>, Point3<f64>)>,
}

impl SampleTuple {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if !self.gray.same_size(&self.depth) || self.gray.width() != w || self.gray.height() != h {
            return Err(Error::DimensionMismatch(format!(
                "gray {}x{}, depth {}x{}, intrinsics {w}x{h}",
                self.gray.width(),
                self.gray.height(),
                self.depth.width(),
                self.depth.height()
            )));
        }
        if self.trajectory.frame() != CAMERA_FRAME {
            return Err(Error::FrameMismatch {
                trajectory: self.trajectory.frame().to_string(),
                cloud: CAMERA_FRAME.to_string(),
            });
        }
        Ok(())
    }

    /// Points whose projection must stay inside the image: the eight
    /// bounding-box corners of the shoe, else the trajectory waypoints.
    pub fn view_points(&self) -> Vec<Point3<f64>> {
        match self.shoe_bounds {
            Some((lo, hi)) => corners(&lo, &hi).iter().map(|c| self.shoe_pose.transform_point(c)).collect(),
            None => self
                .trajectory
                .waypoints()
                .iter()
                .map(|w| Point3::from(*w.translation()))
                .collect(),
        }
    }
}

fn corners(lo: &Point3<f64>, hi: &Point3<f64>) -> [Point3<f64>; 8] {
    let mut out = [Point3::origin(); 8];
    for (i, c) in out.iter_mut().enumerate() {
        *c = Point3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        );
    }
    out
}

/// T_C'_C. Positive `delta_z` moves the camera toward the scene, so scene
/// depths shrink by `delta_z`.
pub fn make_aug_transform(p: &AugmentationParams) -> Pose {
    let r = rot_y(p.phi) * rot_x(p.theta);
    Pose::new_repaired(r, Vector3::new(0.0, 0.0, -p.delta_z)).expect("product of rotations")
}

pub fn augment_geometry(sample: &SampleTuple, t: &Pose) -> (Trajectory, Pose) {
    (sample.trajectory.mapped(t, sample.trajectory.frame()), t.compose(&sample.shoe_pose))
}

/// Re-renders depth from the new viewpoint: every valid pixel is
/// back-projected, moved by `t` and splatted to the nearest pixel, keeping the
/// smallest depth. Pixels nothing lands on become holes (0).
pub fn augment_depth(d: &DepthImage, t: &Pose, k: &CameraIntrinsics) -> DepthImage {
    let mut out = Raster::zeros(d.width(), d.height());
    for row in 0..d.height() {
        for col in 0..d.width() {
            if let Some((c, r, z)) = reproject_pixel(d, t, k, col, row) {
                let cur = out.get(c, r);
                if cur == 0.0 || z < cur {
                    out.set(c, r, z);
                }
            }
        }
    }
    out
}

/// Where source pixel `(col, row)` lands after `t`, with its new depth.
pub fn reproject_pixel(d: &DepthImage, t: &Pose, k: &CameraIntrinsics, col: u32, row: u32) -> Option<(u32, u32, f32)> {
    let z = d.get(col, row) as f64;
    if !(z > 0.0) {
        return None;
    }
    let p = t.transform_point(&k.backproject(col as f64, row as f64, z).ok()?);
    let (u, v, z) = k.project(&p).ok()?;
    let (u, v) = (u.round(), v.round());
    if u < 0.0 || v < 0.0 || u >= d.width() as f64 || v >= d.height() as f64 {
        return None;
    }
    let z = z as f32;
    (z > 0.0).then_some((u as u32, v as u32, z))
}

pub fn scale_factor(z0: f64, delta_z: f64) -> Result<f64> {
    let denom = z0 - delta_z;
    if !(denom >= MIN_SCALED_DEPTH) {
        return Err(Error::DegenerateScale(denom));
    }
    Ok(z0 / denom)
}

/// `(rows, cols)`: positive rows move content up, positive cols move it right.
pub fn pixel_shift(p: &AugmentationParams, k: &CameraIntrinsics) -> (i64, i64) {
    let rows = (p.theta / k.fov_v() * k.height as f64).round() as i64;
    let cols = (p.phi / k.fov_u() * k.width as f64).round() as i64;
    (rows, cols)
}

/// Scale-then-shift approximation of the gray image seen from the new camera.
/// `z0` is the depth of the shoe-frame origin in the original camera.
pub fn augment_gray(g: &GrayImage, p: &AugmentationParams, z0: f64, k: &CameraIntrinsics) -> Result<GrayImage> {
    let s = scale_factor(z0, p.delta_z)?;
    let scaled = if s == 1.0 { g.clone() } else { scale_about(g, s, k.cx, k.cy) };
    let (rows, cols) = pixel_shift(p, k);
    Ok(shift(&scaled, rows, cols))
}

fn scale_about(g: &GrayImage, s: f64, cx: f64, cy: f64) -> GrayImage {
    let (w, h) = (g.width() as i64, g.height() as i64);
    let mut out = Raster::zeros(g.width(), g.height());
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            g.get(x as u32, y as u32) as f64
        }
    };
    for row in 0..g.height() {
        for col in 0..g.width() {
            let x = cx + (col as f64 - cx) / s;
            let y = cy + (row as f64 - cy) / s;
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
            let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
            out.set(col, row, (top * (1.0 - fy) + bottom * fy) as f32);
        }
    }
    out
}

fn shift(g: &GrayImage, rows: i64, cols: i64) -> GrayImage {
    if rows == 0 && cols == 0 {
        return g.clone();
    }
    let (w, h) = (g.width() as i64, g.height() as i64);
    let mut out = Raster::zeros(g.width(), g.height());
    for row in 0..h {
        let src_row = row + rows;
        if src_row < 0 || src_row >= h {
            continue;
        }
        for col in 0..w {
            let src_col = col - cols;
            if src_col >= 0 && src_col < w {
                out.set(col as u32, row as u32, g.get(src_col as u32, src_row as u32));
            }
        }
    }
    out
}

/// True when every point projects inside the image in front of the camera.
pub fn in_view(points: &[Point3<f64>], k: &CameraIntrinsics) -> bool {
    points
        .iter()
        .all(|p| matches!(k.project(p), Ok((u, v, _)) if k.contains(u, v)))
}

pub fn augment_sample(sample: &SampleTuple, p: &AugmentationParams) -> Result<SampleTuple> {
    let t = make_aug_transform(p);
    let moved: Vec<_> = sample.view_points().iter().map(|q| t.transform_point(q)).collect();
    if !in_view(&moved, &sample.intrinsics) {
        return Err(Error::OutOfView);
    }
    let z0 = sample.shoe_pose.translation().z;
    let gray = augment_gray(&sample.gray, p, z0, &sample.intrinsics)?;
    let depth = augment_depth(&sample.depth, &t, &sample.intrinsics);
    let (trajectory, shoe_pose) = augment_geometry(sample, &t);
    Ok(SampleTuple {
        gray,
        depth,
        trajectory,
        shoe_pose,
        intrinsics: sample.intrinsics,
        shoe_bounds: sample.shoe_bounds,
    })
}

/// How the optical-axis displacement is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DepthRange {
    /// Draw the shoe-origin depth after augmentation and solve for `delta_z`.
    TargetDepth { min: f64, max: f64 },
    /// Draw `delta_z` directly.
    Delta { min: f64, max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationRanges {
    pub theta: [f64; 2],
    pub phi: [f64; 2],
    pub depth: DepthRange,
}

impl Default for AugmentationRanges {
    fn default() -> Self {
        Self {
            theta: [-0.25, 0.25],
            phi: [-0.25, 0.25],
            depth: DepthRange::TargetDepth { min: 0.4, max: 1.0 },
        }
    }
}

impl AugmentationRanges {
    pub const NONE: AugmentationRanges = AugmentationRanges {
        theta: [0.0, 0.0],
        phi: [0.0, 0.0],
        depth: DepthRange::Delta { min: 0.0, max: 0.0 },
    };

    pub fn validate(&self) -> Result<()> {
        let (dlo, dhi) = match self.depth {
            DepthRange::TargetDepth { min, max } => {
                if !(min > 0.0) {
                    return Err(Error::InvalidConfig("target depth must be positive".into()));
                }
                (min, max)
            }
            DepthRange::Delta { min, max } => (min, max),
        };
        for (name, [lo, hi]) in [("theta", self.theta), ("phi", self.phi), ("depth", [dlo, dhi])] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} range [{lo}, {hi}] is empty or not finite")));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Rejection-samples parameters until the shoe stays in view.
pub fn draw_params<R: Rng + ?Sized>(
    rng: &mut R,
    sample: &SampleTuple,
    ranges: &AugmentationRanges,
) -> Result<AugmentationParams> {
    ranges.validate()?;
    let view = sample.view_points();
    let origin = sample.shoe_pose.translation();
    let z0 = origin.z;
    for _ in 0..REJECTION_BUDGET {
        let theta = uniform(rng, ranges.theta);
        let phi = uniform(rng, ranges.phi);
        let delta_z = match ranges.depth {
            DepthRange::Delta { min, max } => uniform(rng, [min, max]),
            DepthRange::TargetDepth { min, max } => {
                let target = uniform(rng, [min, max]);
                (rot_y(phi) * rot_x(theta) * origin).z - target
            }
        };
        let p = AugmentationParams { theta, phi, delta_z };
        if scale_factor(z0, delta_z).is_err() {
            continue;
        }
        let t = make_aug_transform(&p);
        let moved: Vec<_> = view.iter().map(|q| t.transform_point(q)).collect();
        if in_view(&moved, &sample.intrinsics) {
            return Ok(p);
        }
    }
    Err(Error::RejectionBudgetExhausted(REJECTION_BUDGET))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::render_cloud;
    use crate::se3::rot_z;
    use crate::pointcloud::PointCloud;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn small_k() -> CameraIntrinsics {
        CameraIntrinsics::new(60.0, 60.0, 31.5, 23.5, 64, 48).unwrap()
    }

    fn plane(k: &CameraIntrinsics, z: f32) -> DepthImage {
        Raster::from_data(k.width, k.height, vec![z; (k.width * k.height) as usize]).unwrap()
    }

    #[test]
    fn transform_layout() {
        assert_eq!(make_aug_transform(&AugmentationParams::IDENTITY), Pose::identity());
        let t = make_aug_transform(&AugmentationParams::new(0.1, 0.0, 0.0).unwrap());
        assert!((t.rotation() - rot_x(0.1)).norm() < 1e-15);
        let t = make_aug_transform(&AugmentationParams::new(FRAC_PI_2, FRAC_PI_2, 0.0).unwrap());
        assert!((t.rotation() - rot_y(FRAC_PI_2) * rot_x(FRAC_PI_2)).norm() < 1e-12);
        assert!((t.rotation() - rot_x(FRAC_PI_2) * rot_y(FRAC_PI_2)).norm() > 1.0);
    }

    #[test]
    fn hand_evaluated_formulas() {
        assert!((scale_factor(0.6, 0.1).unwrap() - 1.2).abs() < 1e-12);
        assert!(matches!(scale_factor(0.6, 0.58), Err(Error::DegenerateScale(_))));
        // fy chosen so that fov_v = 0.8 rad exactly
        let fy = 240.0 / 0.4f64.tan();
        let k = CameraIntrinsics::new(fy, fy, 319.5, 239.5, 640, 480).unwrap();
        assert!((k.fov_v() - 0.8).abs() < 1e-12);
        let p = AugmentationParams::new(0.05, 0.0, 0.0).unwrap();
        assert_eq!(pixel_shift(&p, &k), (30, 0));
    }

    #[test]
    fn pure_dz_moves_plane_closer() {
        let k = small_k();
        let t = make_aug_transform(&AugmentationParams::new(0.0, 0.0, 0.1).unwrap());
        let out = augment_depth(&plane(&k, 0.6), &t, &k);
        assert!(out.count_nonzero() > 0);
        for v in out.data().iter().filter(|v| **v != 0.0) {
            assert!((*v as f64 - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_depth_is_exact() {
        let k = small_k();
        let mut d = plane(&k, 0.7);
        d.set(3, 4, 0.0);
        d.set(10, 10, 0.55);
        assert_eq!(augment_depth(&d, &Pose::identity(), &k), d);
    }

    #[test]
    fn gray_identity_and_shift() {
        let k = small_k();
        let g = Raster::from_data(64, 48, (0..64 * 48).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        assert_eq!(augment_gray(&g, &AugmentationParams::IDENTITY, 0.6, &k).unwrap(), g);
        let theta = 3.0 * k.fov_v() / 48.0;
        let out = augment_gray(&g, &AugmentationParams::new(theta, 0.0, 0.0).unwrap(), 0.6, &k).unwrap();
        assert_eq!(out.get(5, 0), g.get(5, 3));
        assert_eq!(out.get(5, 47), 0.0);
        let phi = -2.0 * k.fov_u() / 64.0;
        let out = augment_gray(&g, &AugmentationParams::new(0.0, phi, 0.0).unwrap(), 0.6, &k).unwrap();
        assert_eq!(out.get(0, 9), g.get(2, 9));
        assert_eq!(out.get(63, 9), 0.0);
    }

    #[test]
    fn shift_direction_matches_reprojection() {
        // A point on the optical axis moves the same way in both models.
        let k = CameraIntrinsics::default_vga();
        for (theta, phi) in [(0.1, 0.0), (0.0, 0.1), (-0.1, 0.05)] {
            let p = AugmentationParams::new(theta, phi, 0.0).unwrap();
            let (u, v, _) = k.project(&make_aug_transform(&p).transform_point(&Point3::new(0.0, 0.0, 0.6))).unwrap();
            let (rows, cols) = pixel_shift(&p, &k);
            assert_eq!((k.cy - v).signum(), (rows as f64).signum());
            assert_eq!((u - k.cx).signum(), (cols as f64).signum());
        }
    }

    #[test]
    fn gray_scaling_magnifies_about_principal_point() {
        let k = small_k();
        let mut g = Raster::zeros(64, 48);
        // a 1-pixel bright dot 10 px right of the principal point
        g.set(41, 23, 1.0);
        g.set(41, 24, 1.0);
        let out = augment_gray(&g, &AugmentationParams::new(0.0, 0.0, 0.3).unwrap(), 0.6, &k).unwrap();
        let (mut best, mut at) = (0.0, 0);
        for c in 0..64 {
            if out.get(c, 23) > best {
                best = out.get(c, 23);
                at = c;
            }
        }
        // 31.5 + 9.5 * 2
        assert!((at as i64 - 50).abs() <= 1, "peak at {at}");
    }

    fn sample() -> SampleTuple {
        let k = small_k();
        let pts: Vec<_> = (0..20)
            .flat_map(|i| (0..10).map(move |j| Point3::new(-0.05 + i as f64 * 0.005, -0.025 + j as f64 * 0.005, 0.0)))
            .collect();
        let cloud = PointCloud::new(pts, "shoe").unwrap();
        let shoe_pose = Pose::new(rot_z(0.3), Vector3::new(0.01, 0.0, 0.6)).unwrap();
        let (gray, depth) = render_cloud(&cloud, &shoe_pose, &k).unwrap();
        let traj = Trajectory::new(
            CAMERA_FRAME,
            (0..9).map(|i| shoe_pose.compose(&Pose::from_translation(0.0, 0.0, 0.01 * i as f64))).collect(),
        )
        .unwrap();
        SampleTuple {
            gray,
            depth,
            trajectory: traj,
            shoe_pose,
            intrinsics: k,
            shoe_bounds: cloud.bounds(),
        }
    }

    #[test]
    fn identity_sample_round_trip() {
        let s = sample();
        assert_eq!(augment_sample(&s, &AugmentationParams::IDENTITY).unwrap(), s);
    }

    #[test]
    fn geometry_group_action() {
        let s = sample();
        let t1 = make_aug_transform(&AugmentationParams::new(0.1, -0.05, 0.05).unwrap());
        let t2 = make_aug_transform(&AugmentationParams::new(-0.03, 0.12, -0.1).unwrap());
        let (tr1, sp1) = augment_geometry(&s, &t1);
        let s1 = SampleTuple {
            trajectory: tr1,
            shoe_pose: sp1,
            ..s.clone()
        };
        let (a, pa) = augment_geometry(&s1, &t2);
        let (b, pb) = augment_geometry(&s, &t2.compose(&t1));
        assert!((pa.to_matrix() - pb.to_matrix()).norm() < 1e-9);
        for (x, y) in a.to_flat().iter().zip(b.to_flat()) {
            assert!((x - y).abs() < 1e-9);
        }
        let (back, _) = augment_geometry(&s1, &t1.inverse());
        for (x, y) in back.to_flat().iter().zip(s.trajectory.to_flat()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_view_rejected() {
        let s = sample();
        let err = augment_sample(&s, &AugmentationParams::new(0.0, 0.6, 0.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::OutOfView));
    }

    #[test]
    fn collapsed_ranges_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = draw_params(&mut rng, &sample(), &AugmentationRanges::NONE).unwrap();
        assert_eq!(p, AugmentationParams::IDENTITY);
    }

    #[test]
    fn draws_are_deterministic_and_in_view() {
        let s = sample();
        let r = AugmentationRanges {
            depth: DepthRange::TargetDepth { min: 0.5, max: 1.0 },
            ..Default::default()
        };
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..20).map(|_| draw_params(&mut rng, &s, &r).unwrap()).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in &a {
            assert_eq!(*p, draw_params(&mut rng, &s, &r).unwrap());
            let aug = augment_sample(&s, p).unwrap();
            let z = aug.shoe_pose.translation().z;
            assert!((0.5 - 1e-9..=1.0 + 1e-9).contains(&z));
        }
    }

    #[test]
    fn impossible_ranges_exhaust_budget() {
        let r = AugmentationRanges {
            phi: [1.2, 1.3],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = draw_params(&mut rng, &sample(), &r).unwrap_err();
        assert!(matches!(err, Error::RejectionBudgetExhausted(1000)));
        let bad = AugmentationRanges {
            theta: [0.2, 0.1],
            ..Default::default()
        };
        assert!(matches!(draw_params(&mut rng, &sample(), &bad), Err(Error::InvalidConfig(_))));
    }
}
