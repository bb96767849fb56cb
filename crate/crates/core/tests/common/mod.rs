#![allow(dead_code)]

use hookplan_core::raster::DepthImage;
use hookplan_core::capture::ShoeScene;
use hookplan_core::expert::ExpertConfig;
use hookplan_core::raster::Raster;
use hookplan_core::se3::{sample_so3_uniform, CameraIntrinsics, Pose};
use hookplan_core::synthetic::{Archetype, HookModel};
use nalgebra::{Point3, Vector3};
use rand::Rng;

pub fn scene(a: Archetype) -> ShoeScene {
    ShoeScene::for_archetype(a, 0, &HookModel::default(), ExpertConfig::default().planner.clearance_eps).unwrap()
}

pub fn brute_min_sq(cloud: &[Point3<f64>], q: &Point3<f64>) -> f64 {
    cloud.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min)
}

/// Dense reprojection oracle: for every target pixel, scan every source pixel
/// and keep the nearest depth that lands there.
pub fn depth_oracle(d: &DepthImage, t: &Pose, k: &CameraIntrinsics) -> DepthImage {
    let (w, h) = (d.width(), d.height());
    let mut landing = Vec::with_capacity((w * h) as usize);
    for row in 0..h {
        for col in 0..w {
            let z = d.get(col, row) as f64;
            if z <= 0.0 {
                landing.push(None);
                continue;
            }
            let p = Point3::new((col as f64 - k.cx) * z / k.fx, (row as f64 - k.cy) * z / k.fy, z);
            let q = t.transform_point(&p);
            if q.z <= 0.0 {
                landing.push(None);
                continue;
            }
            let u = (k.fx * q.x / q.z + k.cx).round();
            let v = (k.fy * q.y / q.z + k.cy).round();
            landing.push(Some((u, v, q.z as f32)));
        }
    }
    let mut out = Raster::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let best = landing
                .iter()
                .flatten()
                .filter(|(u, v, z)| *u == col as f64 && *v == row as f64 && *z > 0.0)
                .map(|(_, _, z)| *z)
                .fold(f32::INFINITY, f32::min);
            if best.is_finite() {
                out.set(col, row, best);
            }
        }
    }
    out
}

/// Start pose somewhere above the shoe with an arbitrary orientation.
pub fn random_start<R: Rng>(rng: &mut R, scene: &ShoeScene) -> Pose {
    loop {
        let t = Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.15..0.15), rng.gen_range(0.12..0.3));
        let p = Pose::new(sample_so3_uniform(rng), t).unwrap();
        if !scene.world.in_collision(&p) {
            return p;
        }
    }
}
