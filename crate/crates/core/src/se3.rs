//! Rigid-body poses, Euler angles, rotation sampling and the pinhole camera.
//!
//! A [`Pose`] is stored as a rotation matrix plus a translation in meters. It
//! doubles as the frame-change object (`T_A_B` maps points expressed in `B`
//! into `A`) and as a tool waypoint. Composition follows matrix order:
//! `a.compose(&b)` applies `b` first, then `a`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality tolerance for a rotation to be accepted as-is.
pub const ROTATION_TOL: f64 = 1e-9;

/// Drift above which composed rotations are projected back onto SO(3).
const RENORMALIZE_DRIFT: f64 = 1e-12;

/// Largest drift that deserialization will silently repair.
pub const REPAIR_TOL: f64 = 1e-6;

/// `‖RᵀR − I‖_F`
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// True when `r` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    r.iter().all(|v| v.is_finite())
        && orthonormality_error(r) < tol
        && (r.determinant() - 1.0).abs() < tol
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation angle of `r` in `[0, π]`.
///
/// Uses `atan2(sin, cos)` so small angles keep full precision.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = 0.5 * (r.trace() - 1.0);
    let skew = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin = 0.5 * skew.norm();
    sin.atan2(cos)
}

/// Angle of the relative rotation `aᵀ·b`.
pub fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// SE(3) rigid transform.
#[derive(Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        let e = matrix_to_euler(&self.rotation).angles;
        write!(
            f,
            "Pose(t=[{:.6}, {:.6}, {:.6}], rpy=[{:.6}, {:.6}, {:.6}])",
            t.x, t.y, t.z, e.phi, e.theta, e.psi
        )
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting matrices that are not rotations within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !is_rotation(&rotation, ROTATION_TOL) {
            return Err(Error::NotRotation(orthonormality_error(&rotation)));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NotRotation(f64::NAN));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a pose, repairing rotations that drifted by less than `REPAIR_TOL`.
    pub fn new_repaired(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = orthonormality_error(&rotation);
        if !err.is_finite() || err > REPAIR_TOL || rotation.determinant() < 0.0 {
            return Err(Error::NotRotation(err));
        }
        let rotation = if err > RENORMALIZE_DRIFT {
            orthonormalize(&rotation)
        } else {
            rotation
        };
        Self::new(rotation, translation)
    }

    /// Caller guarantees `rotation` is a rotation matrix.
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Result<Self> {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn with_translation(mut self, t: Vector3<f64>) -> Self {
        self.translation = t;
        self
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_error(&rotation) > RENORMALIZE_DRIFT {
            rotation = orthonormalize(&rotation);
        }
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4×4 as 16 numbers.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[4 * r + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 16 {
            return Err(Error::BadLength {
                expected: 16,
                got: v.len(),
            });
        }
        let bottom = [v[12], v[13], v[14], v[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::NotRotation(f64::NAN));
        }
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new_repaired(r, Vector3::new(v[3], v[7], v[11]))
    }

    /// Translation lerp and shortest-arc rotation slerp. Endpoints are exact.
    pub fn interpolate(&self, other: &Pose, t: f64) -> Pose {
        if t <= 0.0 {
            return *self;
        }
        if t >= 1.0 {
            return *other;
        }
        let translation = self.translation + (other.translation - self.translation) * t;
        let qa = quat(&self.rotation);
        let mut rel = qa.inverse() * quat(&other.rotation);
        if rel.w < 0.0 {
            rel = UnitQuaternion::new_unchecked(-rel.into_inner());
        }
        let step = rel.powf(t);
        let rotation = (qa * step).to_rotation_matrix().into_inner();
        Pose {
            rotation,
            translation,
        }
    }
}

fn quat(r: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl std::ops::Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Pose::from_row_major(&v).map_err(de::Error::custom)
    }
}

/// Weights of the SE(3) metric: `w_t·‖Δt‖ + w_r·angle(ΔR)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    /// Per meter.
    pub translation: f64,
    /// Per radian.
    pub rotation: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            translation: 1.0,
            rotation: 0.5,
        }
    }
}

impl MetricWeights {
    pub const TRANSLATION_ONLY: MetricWeights = MetricWeights {
        translation: 1.0,
        rotation: 0.0,
    };
}

pub fn se3_distance(a: &Pose, b: &Pose, w: &MetricWeights) -> f64 {
    let dt = (a.translation - b.translation).norm();
    let dr = if w.rotation == 0.0 {
        0.0
    } else {
        angle_between(&a.rotation, &b.rotation)
    };
    w.translation * dt + w.rotation * dr
}

/// Extrinsic X-Y-Z Euler angles: `R = R_z(psi)·R_y(theta)·R_x(phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// Set when `|r[2][0]|` is within 1e-9 of 1; `phi` is then pinned to 0.
    pub gimbal_lock: bool,
}

pub fn euler_to_matrix(e: &EulerAngles) -> Matrix3<f64> {
    rot_z(e.psi) * rot_y(e.theta) * rot_x(e.phi)
}

pub fn matrix_to_euler(r: &Matrix3<f64>) -> EulerDecomposition {
    let s = (-r[(2, 0)]).clamp(-1.0, 1.0);
    if r[(2, 0)].abs() > 1.0 - 1e-9 {
        let theta = if s > 0.0 { PI / 2.0 } else { -PI / 2.0 };
        let psi = (-r[(0, 1)]).atan2(r[(1, 1)]);
        return EulerDecomposition {
            angles: EulerAngles::new(0.0, theta, psi),
            gimbal_lock: true,
        };
    }
    EulerDecomposition {
        angles: EulerAngles {
            phi: r[(2, 1)].atan2(r[(2, 2)]),
            theta: s.asin(),
            psi: r[(1, 0)].atan2(r[(0, 0)]),
        },
        gimbal_lock: false,
    }
}

/// Pitch with density `cos(pitch)/2` on `[-π/2, π/2]` from `u ~ U(0,1)`.
pub fn pitch_from_uniform(u: f64) -> f64 {
    (2.0 * u - 1.0).clamp(-1.0, 1.0).asin()
}

/// Haar-uniform rotation via Euler angles: yaw and roll uniform, pitch = asin(2u − 1).
pub fn sample_so3_uniform<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let psi = rng.gen_range(-PI..PI);
    let phi = rng.gen_range(-PI..PI);
    let theta = pitch_from_uniform(rng.gen::<f64>());
    euler_to_matrix(&EulerAngles { phi, theta, psi })
}

/// Pinhole intrinsics. Fields of view are derived, never stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl<'de> Deserialize<'de> for CameraIntrinsics {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RawIntrinsics::deserialize(d)?;
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height).map_err(de::Error::custom)
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidIntrinsics(m.to_string()));
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return bad("focal lengths must be positive");
        }
        if width == 0 || height == 0 {
            return bad("image must be non-empty");
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return bad("principal point outside the image");
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// 640×480 RGB-D sensor with principal point at the image center.
    pub fn default_vga() -> Self {
        Self::new(615.0, 615.0, 319.5, 239.5, 640, 480).unwrap()
    }

    /// Same field of view, different resolution.
    pub fn scaled(&self, width: u32, height: u32) -> Result<Self> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::new(
            self.fx * sx,
            self.fy * sy,
            (self.cx + 0.5) * sx - 0.5,
            (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        )
    }

    pub fn fov_u(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.fx)).atan()
    }

    pub fn fov_v(&self) -> f64 {
        2.0 * (self.height as f64 / (2.0 * self.fy)).atan()
    }

    /// Camera-frame point to `(u, v, depth)`.
    pub fn project(&self, p: &Point3<f64>) -> Result<(f64, f64, f64)> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera(p.z));
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z))
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::BehindCamera(depth));
        }
        Ok(Point3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ))
    }

    /// True when pixel coordinates fall inside `[0, w) × [0, h)` after rounding.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let (u, v) = (u.round(), v.round());
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}
