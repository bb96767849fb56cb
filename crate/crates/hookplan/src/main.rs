use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use hookplan_core::augment::{augment_sample, draw_params, AugmentationParams, SampleTuple};
use hookplan_core::baseline::{estimate_shoe_pose, retarget_trajectory, to_robot_frame, CalibrationContext};
use hookplan_core::capture::{capture_matrix, evaluate_capture_with, CaptureMatrix};
use hookplan_core::config::PipelineConfig;
use hookplan_core::dataset::{
    generate_dataset, render_base_views, synthetic_bundle, validate_dataset, DataBundle, DatasetOptions, Manifest,
};
use hookplan_core::expert::{default_start, finish_trajectory, goal_pose, smoothing_rng};
use hookplan_core::planner::{plan_in, CollisionWorld, RawPath};
use hookplan_core::ply::{load_ply, save_ply, PlyEncoding, PlyPrecision};
use hookplan_core::pointcloud::{PointCloud, SpatialIndex};
use hookplan_core::raster::{load_depth_png, load_gray_png, save_depth_png, save_gray_png};
use hookplan_core::se3::Pose;
use hookplan_core::smoothing::{shortcut_smooth, Trajectory};
use hookplan_core::synthetic::{generate_synthetic_shoe, Archetype, HookModel};
use hookplan_core::Error;
use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "hookplan", version, about = "Plan hook trajectories and build augmented training data")]
struct Cli {
    /// Random seed for planning, augmentation and dataset generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for verbs that write several files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic shoe cloud and its goal point.
    Synth {
        #[arg(long)]
        archetype: Archetype,
        #[arg(long, default_value_t = 0)]
        shoe_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a raw collision-free path for the hook.
    Plan {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shortcut-smooth a raw path, add the lift and resample.
    Smooth {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render gray and depth views of a cloud around a ring of cameras.
    Render {
        #[arg(long)]
        cloud: PathBuf,
    },
    /// Augment one sample tuple.
    Augment(AugmentArgs),
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Estimate shoe pose by PCA and retarget a shoe-frame trajectory.
    Baseline {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Table normal in the cloud frame.
        #[arg(long, default_value = "0,0,1", value_parser = parse_vec3)]
        up: Vector3<f64>,
        /// Use the 180°-flipped heading hypothesis.
        #[arg(long)]
        flipped: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-archetype capture success matrix.
    EvalMatrix {
        #[arg(long, default_value = "all")]
        archetypes: String,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        shoe_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trajectory with the capture simulator.
    Simulate {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        traj: PathBuf,
    },
}

#[derive(Args)]
struct SceneArgs {
    /// Object cloud (PLY).
    #[arg(long)]
    cloud: PathBuf,
    /// Goal point: "x,y,z" or a JSON file with a "goal" array.
    #[arg(long)]
    goal: String,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    gray: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    /// Camera-frame trajectory JSON.
    #[arg(long)]
    traj: PathBuf,
    /// JSON file holding T_C_S as 16 row-major numbers.
    #[arg(long)]
    shoe_pose: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta_z: Option<f64>,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate an augmented dataset.
    Gen {
        /// Synthetic archetypes ("all" or comma separated); ignored with --bundles.
        #[arg(long, default_value = "all")]
        archetypes: String,
        /// JSON list of {shoe_id, cloud, goal} user bundles.
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        augmentations: usize,
    },
    /// Re-check every record of a generated dataset.
    Validate,
}

#[derive(Serialize, Deserialize)]
struct GoalFile {
    goal: [f64; 3],
}

#[derive(Deserialize)]
struct BundleSpec {
    shoe_id: String,
    cloud: PathBuf,
    goal: [f64; 3],
}

#[derive(Serialize)]
struct ViewFile {
    view: usize,
    gray: String,
    depth: String,
    shoe_pose: Pose,
}

/// A failure the user should fix in the invocation rather than the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn parse_vec3(s: &str) -> std::result::Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| e.to_string())?;
    match v.as_slice() {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected x,y,z, got '{s}'")),
    }
}

fn read_goal(arg: &str) -> Result<Point3<f64>> {
    if let Ok(v) = parse_vec3(arg) {
        return Ok(Point3::from(v));
    }
    let g: GoalFile = read_json(Path::new(arg))?;
    Ok(Point3::from(g.goal))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn parse_archetypes(s: &str) -> Result<Vec<Archetype>> {
    if s == "all" {
        return Ok(Archetype::ALL.to_vec());
    }
    s.split(',')
        .map(|a| a.trim().parse::<Archetype>().map_err(|e| Usage(e.to_string()).into()))
        .collect()
}

struct Ctx {
    cfg: PipelineConfig,
    seed: u64,
    out_dir: PathBuf,
    jobs: usize,
    hook: HookModel,
}

impl Ctx {
    fn world(&self, cloud: &PointCloud) -> Result<CollisionWorld> {
        Ok(CollisionWorld::new(&self.hook.cloud, cloud, self.cfg.planner.clearance_eps)?)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| Usage(format!("{}: {e}", p.display())))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.planner.seed = s;
    }
    let ctx = Ctx {
        seed: cfg.planner.seed,
        cfg,
        out_dir: cli.out_dir,
        jobs: cli.jobs,
        hook: HookModel::default(),
    };
    if ctx.jobs > 0 {
        // Already-initialised pools are fine; the first caller wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(ctx.jobs).build_global();
    }
    match cli.cmd {
        Cmd::Synth {
            archetype,
            shoe_seed,
            out,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(shoe_seed);
            let shoe = generate_synthetic_shoe(archetype, &archetype.default_params(), &mut rng)?;
            save_ply(&shoe.cloud, &out, PlyEncoding::BinaryLittleEndian, PlyPrecision::Double)?;
            let goal = GoalFile {
                goal: [shoe.goal.x, shoe.goal.y, shoe.goal.z],
            };
            write_json(&out.with_extension("goal.json"), &goal)?;
            println!("{}", serde_json::to_string(&goal)?);
        }
        Cmd::Plan { scene, out } => {
            let cloud = load_ply(&scene.cloud)?;
            let goal = goal_pose(&read_goal(&scene.goal)?);
            let world = ctx.world(&cloud)?;
            let raw = plan_in(&default_start(&cloud)?, &goal, &world, &ctx.cfg.planner, cloud.frame())?;
            info!("planned {} waypoints in {} iterations", raw.waypoints.len(), raw.metadata.iterations);
            write_json(&out, &raw)?;
        }
        Cmd::Smooth { scene, path, out } => {
            let cloud = load_ply(&scene.cloud)?;
            let raw: RawPath = read_json(&path)?;
            let world = ctx.world(&cloud)?;
            let expert = ctx.cfg.expert();
            let smoothed = shortcut_smooth(&raw, &world, &expert.smoothing(), &mut smoothing_rng(ctx.seed));
            let traj = finish_trajectory(&smoothed, &expert)?;
            write_json(&out, &traj)?;
        }
        Cmd::Render { cloud } => {
            let cloud = load_ply(&cloud)?;
            let views = render_base_views(&cloud, &ctx.cfg.views.poses()?, &ctx.cfg.camera)?;
            fs::create_dir_all(&ctx.out_dir)?;
            let mut index = vec![];
            for (i, v) in views.iter().enumerate() {
                let (g, d) = (format!("view{i:03}_gray.png"), format!("view{i:03}_depth.png"));
                save_gray_png(&v.gray, &ctx.out_dir.join(&g))?;
                save_depth_png(&v.depth, &ctx.out_dir.join(&d))?;
                index.push(ViewFile {
                    view: i,
                    gray: g,
                    depth: d,
                    shoe_pose: v.shoe_pose,
                });
            }
            write_json(&ctx.out_dir.join("views.json"), &index)?;
        }
        Cmd::Augment(a) => return augment(&ctx, a),
        Cmd::Dataset(DatasetCmd::Gen {
            archetypes,
            bundles,
            augmentations,
        }) => {
            let bundles = match bundles {
                Some(p) => user_bundles(&ctx, &p)?,
                None => parse_archetypes(&archetypes)?
                    .into_iter()
                    .map(|a| {
                        synthetic_bundle(a, 0, &ctx.hook, &ctx.cfg.expert(), &ctx.cfg.views, &ctx.cfg.camera)
                            .map_err(anyhow::Error::from)
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            let opts = DatasetOptions {
                per_view_augmentations: augmentations,
                seed: ctx.seed,
                ranges: ctx.cfg.augmentation,
                jobs: ctx.jobs,
            };
            let summary = generate_dataset(&bundles, &opts, &ctx.out_dir)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Cmd::Dataset(DatasetCmd::Validate) => {
            let report = validate_dataset(&Manifest::load(&ctx.out_dir)?);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.ok() {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Baseline {
            cloud,
            traj,
            calib,
            up,
            flipped,
            out,
        } => {
            let cloud = load_ply(&cloud)?;
            let traj: Trajectory = read_json(&traj)?;
            let cal: CalibrationContext = match calib {
                Some(p) => read_json(&p)?,
                None => CalibrationContext::default(),
            };
            let est = estimate_shoe_pose(&cloud, &up)?;
            let pose = if flipped { est.flipped } else { est.pose };
            // With a table calibration the cloud is in the table frame.
            let t_c_s = match cal.table_to_camera {
                Some(t) => t.compose(&pose),
                None => pose,
            };
            let robot = to_robot_frame(&retarget_trajectory(&traj, &t_c_s), &cal);
            write_json(&out, &robot)?;
        }
        Cmd::EvalMatrix {
            archetypes,
            seeds,
            shoe_seed,
            out,
        } => {
            let archetypes = parse_archetypes(&archetypes)?;
            let seeds: Vec<u64> = (0..seeds).map(|s| ctx.seed.wrapping_add(s)).collect();
            let m: CaptureMatrix = capture_matrix(
                &archetypes,
                &seeds,
                shoe_seed,
                &ctx.hook,
                &ctx.cfg.expert(),
                ctx.cfg.capture.r_capture,
            )?;
            write_json(&out, &m)?;
            println!("{}", serde_json::to_string(&m.success)?);
        }
        Cmd::Simulate { scene, traj } => {
            let cloud = load_ply(&scene.cloud)?;
            let goal = read_goal(&scene.goal)?;
            let traj: Trajectory = read_json(&traj)?;
            let v = evaluate_capture_with(
                &traj,
                &ctx.hook,
                &SpatialIndex::build(&cloud),
                &goal,
                ctx.cfg.capture.r_capture,
                ctx.cfg.capture.penetration_tol,
            )?;
            println!("{}", serde_json::to_string(&v)?);
            if !v.success {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn augment(ctx: &Ctx, a: AugmentArgs) -> Result<ExitCode> {
    let gray = load_gray_png(&a.gray)?;
    let depth = load_depth_png(&a.depth)?;
    let trajectory: Trajectory = read_json(&a.traj)?;
    let shoe_pose: Pose = read_json(&a.shoe_pose)?;
    let sample = SampleTuple {
        gray,
        depth,
        trajectory,
        shoe_pose,
        intrinsics: ctx.cfg.camera,
        shoe_bounds: None,
    };
    sample.validate().map_err(|e| Usage(e.to_string()))?;
    let params = match (a.theta, a.phi, a.delta_z) {
        (None, None, None) => draw_params(&mut ChaCha8Rng::seed_from_u64(ctx.seed), &sample, &ctx.cfg.augmentation)?,
        (t, p, z) => AugmentationParams::new(t.unwrap_or(0.0), p.unwrap_or(0.0), z.unwrap_or(0.0))?,
    };
    let out = augment_sample(&sample, &params)?;
    fs::create_dir_all(&ctx.out_dir)?;
    save_gray_png(&out.gray, &ctx.out_dir.join("gray.png"))?;
    save_depth_png(&out.depth, &ctx.out_dir.join("depth.png"))?;
    write_json(&ctx.out_dir.join("trajectory.json"), &out.trajectory)?;
    write_json(&ctx.out_dir.join("shoe_pose.json"), &out.shoe_pose)?;
    write_json(&ctx.out_dir.join("params.json"), &params)?;
    Ok(ExitCode::SUCCESS)
}

fn user_bundles(ctx: &Ctx, path: &Path) -> Result<Vec<DataBundle>> {
    let specs: Vec<BundleSpec> = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    specs
        .into_iter()
        .map(|s| {
            let cloud_path = base.join(&s.cloud);
            let cloud = load_ply(&cloud_path)?;
            let goal = goal_pose(&Point3::from(s.goal));
            let world = ctx.world(&cloud)?;
            let expert = ctx.cfg.expert();
            let planned = hookplan_core::expert::generate_expert_trajectory(
                &default_start(&cloud)?,
                &goal,
                &world,
                cloud.frame(),
                &expert,
            )
            .with_context(|| format!("planning for {}", s.shoe_id))?;
            let views = render_base_views(&cloud, &ctx.cfg.views.poses()?, &ctx.cfg.camera)?;
            Ok(DataBundle {
                shoe_id: s.shoe_id,
                cloud_path: Some(cloud_path),
                cloud,
                goal,
                trajectory: planned.trajectory,
                views,
            })
        })
        .collect()
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidConfig(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
