//! Gray and depth images, point-splat rendering and PNG storage.

use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageBuffer, ImageEncoder, Luma};
use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::se3::{CameraIntrinsics, Pose};

/// Gray value used when a rendered cloud carries no intensities.
pub const DEFAULT_INTENSITY: f64 = 0.5;

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

/// Intensity in `[0, 1]`.
pub type GrayImage = Raster;
/// Depth in meters, 0 marks a hole.
pub type DepthImage = Raster;

impl Raster {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParams(format!("pixel {i} is negative or not finite")));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, v: f32) {
        let w = self.width as usize;
        self.data[row as usize * w + col as usize] = v;
    }

    pub fn same_size(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// Renders a cloud seen from a camera at `t_c_s` (cloud frame to camera).
/// Each point lights the nearest pixel; the closest point wins.
pub fn render_cloud(cloud: &PointCloud, t_c_s: &Pose, k: &CameraIntrinsics) -> Result<(GrayImage, DepthImage)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut gray = Raster::zeros(k.width, k.height);
    let mut depth = Raster::zeros(k.width, k.height);
    let mut zbuf = vec![f64::INFINITY; gray.data.len()];
    for (i, p) in cloud.points().iter().enumerate() {
        let c = t_c_s.transform_point(p);
        if !(c.z > 0.0) {
            return Err(Error::CloudBehindCamera(i));
        }
        let (u, v, z) = k.project(&c)?;
        if !k.contains(u, v) {
            continue;
        }
        let idx = v.round() as usize * k.width as usize + u.round() as usize;
        if z < zbuf[idx] {
            zbuf[idx] = z;
            depth.data[idx] = z as f32;
            let g = cloud.intensities().map_or(DEFAULT_INTENSITY, |s| s[i]);
            gray.data[idx] = quantize(g);
        }
    }
    Ok((gray, depth))
}

/// Snaps an intensity to the nearest 8-bit level so PNG storage is lossless.
pub fn quantize(v: f64) -> f32 {
    ((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32
}

/// Back-projects every valid depth pixel into the camera frame.
pub fn depth_to_points(depth: &DepthImage, k: &CameraIntrinsics) -> Vec<Point3<f64>> {
    let mut out = vec![];
    for row in 0..depth.height {
        for col in 0..depth.width {
            let d = depth.get(col, row) as f64;
            if d > 0.0 {
                out.push(k.backproject(col as f64, row as f64, d).unwrap());
            }
        }
    }
    out
}

fn encoder(file: std::fs::File) -> PngEncoder<std::io::BufWriter<std::fs::File>> {
    PngEncoder::new_with_quality(std::io::BufWriter::new(file), CompressionType::Fast, FilterType::Sub)
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    encoder(std::fs::File::create(path)?).write_image(&bytes, img.width, img.height, ExtendedColorType::L8)?;
    Ok(())
}

/// 16-bit millimeters; depths beyond 65.535 m saturate.
pub fn save_depth_png(img: &DepthImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .iter()
        .flat_map(|v| ((*v as f64 * 1000.0).round().clamp(0.0, 65535.0) as u16).to_ne_bytes())
        .collect();
    encoder(std::fs::File::create(path)?).write_image(&bytes, img.width, img.height, ExtendedColorType::L16)?;
    Ok(())
}

pub fn load_gray_png(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Raster::from_data(w, h, img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
}

pub fn load_depth_png(path: &Path) -> Result<DepthImage> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Raster::from_data(w, h, img.into_raw().into_iter().map(|v| (v as f64 / 1000.0) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_lights_principal_pixel() {
        let k = CameraIntrinsics::default_vga();
        let k = CameraIntrinsics::new(k.fx, k.fy, 320.0, 240.0, 640, 480).unwrap();
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.6)], "shoe").unwrap();
        let (g, d) = render_cloud(&cloud, &Pose::identity(), &k).unwrap();
        assert_eq!(d.count_nonzero(), 1);
        assert_eq!(d.get(320, 240), 0.6f32);
        assert_eq!(g.get(320, 240), quantize(DEFAULT_INTENSITY));
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let k = CameraIntrinsics::default_vga();
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.8), Point3::new(0.0, 0.0, 0.5)], "s")
            .unwrap()
            .with_intensities(vec![0.1, 0.9])
            .unwrap();
        let (g, d) = render_cloud(&cloud, &Pose::identity(), &k).unwrap();
        assert_eq!(d.count_nonzero(), 1);
        assert_eq!(d.get(320, 240), 0.5f32);
        assert_eq!(g.get(320, 240), quantize(0.9));
    }

    #[test]
    fn behind_camera_is_rejected() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.5), Point3::new(0.0, 0.0, -0.1)], "s").unwrap();
        let err = render_cloud(&cloud, &Pose::identity(), &CameraIntrinsics::default_vga()).unwrap_err();
        assert!(matches!(err, Error::CloudBehindCamera(1)));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Raster::from_data(3, 2, vec![0.0, 1.0, quantize(0.3), quantize(0.5), 0.0, quantize(0.7)]).unwrap();
        save_gray_png(&g, &dir.path().join("g.png")).unwrap();
        assert_eq!(load_gray_png(&dir.path().join("g.png")).unwrap(), g);
        let d = Raster::from_data(2, 2, vec![0.0, 0.6, 1.234, 0.5]).unwrap();
        save_depth_png(&d, &dir.path().join("d.png")).unwrap();
        let back = load_depth_png(&dir.path().join("d.png")).unwrap();
        for (a, b) in d.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 5e-4);
        }
        assert_eq!(back.get(0, 0), 0.0);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(matches!(Raster::from_data(2, 2, vec![0.0; 3]), Err(Error::DimensionMismatch(_))));
        assert!(Raster::from_data(1, 1, vec![-1.0]).is_err());
    }
}
