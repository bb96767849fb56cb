//! Bundles → rendered base views → augmented sample tuples on disk.
//!
//! Every record gets a seed derived from `(global seed, shoe id, view, aug)`,
//! so records can be produced in any order by any number of workers. The
//! manifest is JSON lines written in record order; an interrupted run is
//! resumed by skipping records already present.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augment_sample, draw_params, make_aug_transform, AugmentationParams, AugmentationRanges, SampleTuple, CAMERA_FRAME};
use crate::baseline::retarget_trajectory;
use crate::capture::ShoeScene;
use crate::expert::{goal_pose, ExpertConfig};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::raster::{load_depth_png, load_gray_png, render_cloud, save_depth_png, save_gray_png, DepthImage, GrayImage};
use crate::se3::{CameraIntrinsics, Pose};
use crate::smoothing::Trajectory;
use crate::synthetic::{Archetype, HookModel};

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
/// Records computed in parallel between manifest flushes.
const CHUNK: usize = 64;

#[derive(Clone, Debug)]
pub struct BaseView {
    /// T_C_S.
    pub shoe_pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub gray: GrayImage,
    pub depth: DepthImage,
}

#[derive(Clone, Debug)]
pub struct DataBundle {
    pub shoe_id: String,
    pub cloud_path: Option<PathBuf>,
    /// Shoe-frame cloud.
    pub cloud: PointCloud,
    pub goal: Pose,
    /// Shoe-frame expert trajectory planned against `cloud`.
    pub trajectory: Trajectory,
    pub views: Vec<BaseView>,
}

impl DataBundle {
    pub fn base_sample(&self, view: usize) -> SampleTuple {
        let v = &self.views[view];
        SampleTuple {
            gray: v.gray.clone(),
            depth: v.depth.clone(),
            trajectory: retarget_trajectory(&self.trajectory, &v.shoe_pose),
            shoe_pose: v.shoe_pose,
            intrinsics: v.intrinsics,
            shoe_bounds: self.cloud.bounds(),
        }
    }
}

/// Cameras on rings around the shoe, all aimed at the shoe-frame origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewRing {
    pub views: usize,
    /// Camera distance from the shoe origin, meters.
    pub distance: f64,
    /// Elevations above the shoe's xy plane, radians; views cycle through them.
    pub elevations: Vec<f64>,
}

impl Default for ViewRing {
    fn default() -> Self {
        Self {
            views: 10,
            distance: 0.6,
            elevations: vec![35f64.to_radians(), 50f64.to_radians(), 65f64.to_radians()],
        }
    }
}

impl ViewRing {
    /// T_C_S for each view.
    pub fn poses(&self) -> Result<Vec<Pose>> {
        if self.elevations.is_empty() || !(self.distance > 0.0) {
            return Err(Error::InvalidConfig("view ring needs a positive distance and at least one elevation".into()));
        }
        (0..self.views)
            .map(|i| {
                let az = 2.0 * std::f64::consts::PI * i as f64 / self.views as f64;
                let el = self.elevations[i % self.elevations.len()];
                look_at(&(Point3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * self.distance))
            })
            .collect()
    }
}

/// T_C_S for a camera at `eye` (shoe frame) looking at the origin, image
/// "down" along shoe-frame −z.
pub fn look_at(eye: &Point3<f64>) -> Result<Pose> {
    let z = (-eye.coords)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidParams("camera at the target".into()))?;
    let x = z
        .cross(&Vector3::z())
        .try_normalize(1e-9)
        .ok_or_else(|| Error::InvalidParams("camera looks straight along the vertical".into()))?;
    let y = z.cross(&x);
    Ok(Pose::new_repaired(Matrix3::from_columns(&[x, y, z]), eye.coords)?.inverse())
}

pub fn render_base_views(cloud: &PointCloud, view_poses: &[Pose], k: &CameraIntrinsics) -> Result<Vec<BaseView>> {
    view_poses
        .iter()
        .map(|p| {
            let (gray, depth) = render_cloud(cloud, p, k)?;
            Ok(BaseView {
                shoe_pose: *p,
                intrinsics: *k,
                gray,
                depth,
            })
        })
        .collect()
}

/// Plans an expert trajectory for a synthetic shoe and renders its base views.
pub fn synthetic_bundle(
    archetype: Archetype,
    shoe_seed: u64,
    hook: &HookModel,
    cfg: &ExpertConfig,
    ring: &ViewRing,
    k: &CameraIntrinsics,
) -> Result<DataBundle> {
    let scene = ShoeScene::for_archetype(archetype, shoe_seed, hook, cfg.planner.clearance_eps)?;
    let planned = scene.plan(cfg)?;
    let views = render_base_views(&scene.shoe.cloud, &ring.poses()?, k)?;
    Ok(DataBundle {
        shoe_id: format!("{}-{shoe_seed}", archetype.name()),
        cloud_path: None,
        goal: goal_pose(&scene.shoe.goal),
        trajectory: planned.trajectory,
        cloud: scene.shoe.cloud,
        views,
    })
}

/// Seed for one record, independent of every other record.
pub fn record_seed(global: u64, shoe_id: &str, view: usize, aug: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update((shoe_id.len() as u64).to_le_bytes());
    h.update(shoe_id.as_bytes());
    h.update((view as u64).to_le_bytes());
    h.update((aug as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub shoe_id: String,
    pub view: usize,
    /// 0 is the unaugmented base view.
    pub aug: usize,
    pub seed: u64,
    /// Paths relative to the manifest directory.
    pub gray: String,
    pub depth: String,
    pub trajectory: String,
    pub waypoints: usize,
    /// T_C_S, 16 row-major numbers.
    pub shoe_pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub params: AugmentationParams,
    pub tool_version: String,
}

fn record_id(shoe_id: &str, view: usize, aug: usize) -> String {
    format!("{shoe_id}/v{view:03}_a{aug:04}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub per_view_augmentations: usize,
    pub seed: u64,
    pub ranges: AugmentationRanges,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            per_view_augmentations: 10,
            seed: 0,
            ranges: AugmentationRanges::default(),
            jobs: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub written: usize,
    pub resumed: usize,
    pub skipped: Vec<String>,
}

pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Reads `manifest.jsonl` strictly; use generation to repair a torn tail.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_NAME);
        let mut records = vec![];
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => records.push(r),
                Err(e) => {
                    return Err(Error::Parse {
                        path: path.clone(),
                        location: format!("line {}", i + 1),
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            records,
        })
    }
}

/// Valid complete records already on disk; truncates anything after the last one.
fn recover_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(vec![]);
    };
    let mut records = vec![];
    let mut good = 0;
    for chunk in bytes.split_inclusive(|b| *b == b'\n') {
        if !chunk.ends_with(b"\n") {
            break;
        }
        match serde_json::from_slice::<ManifestRecord>(chunk) {
            Ok(r) => {
                records.push(r);
                good += chunk.len();
            }
            Err(_) => break,
        }
    }
    if good != bytes.len() {
        warn!("dropping {} bytes of incomplete manifest data", bytes.len() - good);
        OpenOptions::new().write(true).open(path)?.set_len(good as u64)?;
    }
    Ok(records)
}

struct Job<'a> {
    bundle: &'a DataBundle,
    view: usize,
    aug: usize,
}

fn produce(job: &Job, opts: &DatasetOptions, root: &Path, base: &SampleTuple) -> Result<ManifestRecord> {
    let b = job.bundle;
    let seed = record_seed(opts.seed, &b.shoe_id, job.view, job.aug);
    let (params, sample) = if job.aug == 0 {
        (AugmentationParams::IDENTITY, base.clone())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = draw_params(&mut rng, base, &opts.ranges)?;
        (p, augment_sample(base, &p)?)
    };
    let id = record_id(&b.shoe_id, job.view, job.aug);
    let rel = |suffix: &str| format!("{id}_{suffix}");
    let (gray, depth, traj) = (rel("gray.png"), rel("depth.png"), rel("traj.bin"));
    fs::create_dir_all(root.join(&b.shoe_id))?;
    save_gray_png(&sample.gray, &root.join(&gray))?;
    save_depth_png(&sample.depth, &root.join(&depth))?;
    fs::write(root.join(&traj), sample.trajectory.to_bytes())?;
    Ok(ManifestRecord {
        id,
        shoe_id: b.shoe_id.clone(),
        view: job.view,
        aug: job.aug,
        seed,
        gray,
        depth,
        trajectory: traj,
        waypoints: sample.trajectory.len(),
        shoe_pose: sample.shoe_pose,
        intrinsics: sample.intrinsics,
        params,
        tool_version: TOOL_VERSION.to_string(),
    })
}

/// Writes images, trajectories and `manifest.jsonl` under `root`.
pub fn generate_dataset(bundles: &[DataBundle], opts: &DatasetOptions, root: &Path) -> Result<GenerationSummary> {
    opts.ranges.validate()?;
    let ids: HashSet<_> = bundles.iter().map(|b| b.shoe_id.as_str()).collect();
    if ids.len() != bundles.len() {
        return Err(Error::InvalidParams("shoe ids must be unique".into()));
    }
    fs::create_dir_all(root)?;
    let manifest_path = root.join(MANIFEST_NAME);
    let done: HashSet<String> = recover_manifest(&manifest_path)?.into_iter().map(|r| r.id).collect();
    let mut summary = GenerationSummary {
        resumed: done.len(),
        ..Default::default()
    };

    let bases: HashMap<(usize, usize), SampleTuple> = bundles
        .iter()
        .enumerate()
        .flat_map(|(bi, b)| (0..b.views.len()).map(move |v| ((bi, v), b.base_sample(v))))
        .collect();
    let jobs: Vec<(usize, Job)> = bundles
        .iter()
        .enumerate()
        .flat_map(|(bi, bundle)| {
            (0..bundle.views.len()).flat_map(move |view| {
                (0..=opts.per_view_augmentations).map(move |aug| (bi, Job { bundle, view, aug }))
            })
        })
        .filter(|(_, j)| !done.contains(&record_id(&j.bundle.shoe_id, j.view, j.aug)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut manifest = OpenOptions::new().create(true).append(true).open(&manifest_path)?;
    for chunk in jobs.chunks(CHUNK) {
        let results: Vec<_> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(bi, job)| produce(job, opts, root, &bases[&(*bi, job.view)]))
                .collect()
        });
        let mut buf = Vec::new();
        for ((_, job), res) in chunk.iter().zip(results) {
            match res {
                Ok(rec) => {
                    serde_json::to_writer(&mut buf, &rec)?;
                    buf.push(b'\n');
                    summary.written += 1;
                }
                Err(e @ (Error::OutOfView | Error::RejectionBudgetExhausted(_) | Error::DegenerateScale(_))) => {
                    let id = record_id(&job.bundle.shoe_id, job.view, job.aug);
                    warn!("skipping {id}: {e}");
                    summary.skipped.push(id);
                }
                Err(e) => return Err(e),
            }
        }
        manifest.write_all(&buf)?;
        manifest.sync_data()?;
    }
    info!(
        "dataset: {} written, {} resumed, {} skipped",
        summary.written,
        summary.resumed,
        summary.skipped.len()
    );
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: usize,
    pub passed: usize,
    pub failed: usize,
    pub failures: Vec<RecordFailure>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

pub const GEOMETRY_TOL: f64 = 1e-9;

fn check_record(m: &Manifest, r: &ManifestRecord, parents: &HashMap<(&str, usize), &ManifestRecord>) -> Result<()> {
    let root = &m.root;
    for f in [&r.gray, &r.depth, &r.trajectory] {
        if !root.join(f).is_file() {
            return Err(Error::InvalidParams(format!("missing file {f}")));
        }
    }
    let traj = Trajectory::from_bytes(CAMERA_FRAME, &fs::read(root.join(&r.trajectory))?, r.waypoints)?;
    Pose::from_row_major(&r.shoe_pose.to_row_major())?;
    let (w, h) = (r.intrinsics.width, r.intrinsics.height);
    for img in [load_gray_png(&root.join(&r.gray))?, load_depth_png(&root.join(&r.depth))?] {
        if img.width() != w || img.height() != h {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} but intrinsics {w}x{h}",
                img.width(),
                img.height()
            )));
        }
    }
    if r.aug == 0 {
        if r.params != AugmentationParams::IDENTITY {
            return Err(Error::InvalidParams("base record carries augmentation params".into()));
        }
        return Ok(());
    }
    let parent = parents
        .get(&(r.shoe_id.as_str(), r.view))
        .ok_or_else(|| Error::InvalidParams("base view record missing".into()))?;
    let base = Trajectory::from_bytes(CAMERA_FRAME, &fs::read(root.join(&parent.trajectory))?, parent.waypoints)?;
    let t = make_aug_transform(&r.params);
    let expect = base.mapped(&t, CAMERA_FRAME);
    let dev_traj = expect
        .to_flat()
        .iter()
        .zip(traj.to_flat())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let dev_pose = (t.compose(&parent.shoe_pose).to_matrix() - r.shoe_pose.to_matrix()).abs().max();
    if !(dev_traj <= GEOMETRY_TOL && dev_pose <= GEOMETRY_TOL) {
        return Err(Error::InvalidParams(format!(
            "geometry not reproducible from params (trajectory {dev_traj:.3e}, pose {dev_pose:.3e})"
        )));
    }
    Ok(())
}

pub fn validate_dataset(m: &Manifest) -> ValidationReport {
    let parents: HashMap<(&str, usize), &ManifestRecord> = m
        .records
        .iter()
        .filter(|r| r.aug == 0)
        .map(|r| ((r.shoe_id.as_str(), r.view), r))
        .collect();
    let mut seen = HashSet::new();
    let mut report = ValidationReport {
        records: m.records.len(),
        ..Default::default()
    };
    for r in &m.records {
        let res = if !seen.insert(r.seed) {
            Err(Error::InvalidParams(format!("duplicate seed {}", r.seed)))
        } else {
            check_record(m, r, &parents)
        };
        match res {
            Ok(()) => report.passed += 1,
            Err(e) => {
                report.failed += 1;
                report.failures.push(RecordFailure {
                    id: r.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    report
}
