//! Command-line pipelines: canonicalize meshes, render and composite
//! ground truth, fit poses and evaluate predictions.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde_json::{json, Value};

use nocs_core::canonical::{self, canonicalize, NOCS_CENTER};
use nocs_core::category::CategoryTable;
use nocs_core::compositor::{self, shapes, Background, FrameConfig, TabletopConfig};
use nocs_core::eval::{self, EvalConfig};
use nocs_core::fit::{estimate_pose, FitConfig};
use nocs_core::geom::{projection_error_2d, Intrinsics, PointCloud};
use nocs_core::io::{self, DetectionRecord, FramePaths, PoseRecord, PredictionRecord, SceneRecord};
use nocs_core::render::{handle_visibility, render_scene, SceneInstance, DEFAULT_HANDLE_MIN_PIXELS};
use nocs_core::Error;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PAIRING: i32 = 3;
pub const EXIT_FIT_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nocs", version, about = "Category-level 6D pose and size estimation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Camera intrinsics JSON; defaults to a 640x480 camera.
    #[arg(long, global = true)]
    pub intrinsics: Option<PathBuf>,
    /// Category table JSON; defaults to the built-in six categories.
    #[arg(long, global = true)]
    pub categories: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize an OBJ mesh into the unit NOCS cube.
    Canonicalize { input: PathBuf, output: PathBuf },
    /// Write the built-in procedural category meshes as canonical OBJ files.
    Shapes,
    /// Render ground-truth NOCS, depth and mask images for a scene file.
    Render { scene: PathBuf },
    /// Generate mixed-reality frames on tabletop backgrounds.
    Composite(CompositeArgs),
    /// Estimate pose and size for every masked instance.
    Fit(FitArgs),
    /// Score prediction files against ground truth.
    Eval(EvalArgs),
    /// Mean 2D reprojection distance between two poses of a model.
    ProjectError {
        #[arg(long)]
        pose_a: PathBuf,
        #[arg(long)]
        pose_b: PathBuf,
        /// Canonical OBJ whose vertices are projected.
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CompositeArgs {
    /// Number of frames to generate.
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    /// Directory of `<id>_rgb.png` and `<id>_depth.png` backgrounds; synthetic
    /// tabletops are generated when absent.
    #[arg(long)]
    pub backgrounds: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 5)]
    pub max_objects: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtentSource {
    /// Category-mean NOCS extents from the category table.
    Prior,
    /// Extents spanned by the observed inlier NOCS coordinates.
    Observed,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Directory with `<id>_nocs.png`, `_depth.png`, `_mask.png` and
    /// `_meta.json` (instance ids and classes).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ExtentSource::Prior)]
    pub extents: ExtentSource,
    #[arg(long, default_value_t = 1000)]
    pub ransac_iterations: usize,
    /// RANSAC inlier distance, meters.
    #[arg(long, default_value_t = 0.01)]
    pub inlier_threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
}

/// A failed command: exit code plus a machine-readable record for stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
    pub ids: Vec<String>,
}

impl CliError {
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind, "message": self.message });
        if !self.ids.is_empty() {
            v["ids"] = json!(self.ids);
        }
        v
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, ids) = match &e {
            Error::MissingGroundTruth(ids) => (EXIT_PAIRING, ids.clone()),
            _ => (EXIT_INPUT, Vec::new()),
        };
        CliError {
            code,
            kind: e.kind().to_string(),
            message: e.to_string(),
            ids,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn load_intrinsics(opts: &GlobalOpts) -> CliResult<Intrinsics> {
    Ok(match &opts.intrinsics {
        Some(p) => io::read_intrinsics(p)?,
        None => Intrinsics::default_vga(),
    })
}

fn load_table(opts: &GlobalOpts) -> CliResult<CategoryTable> {
    Ok(match &opts.categories {
        Some(p) => CategoryTable::load(p)?,
        None => CategoryTable::default_table(),
    })
}

fn out_dir(opts: &GlobalOpts) -> CliResult<PathBuf> {
    let dir = opts
        .out
        .clone()
        .ok_or_else(|| CliError::from(Error::invalid("--out is required for this command")))?;
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    Ok(dir)
}

fn with_threads<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::from(Error::invalid(format!("thread pool: {e}"))))?;
    Ok(pool.install(job))
}

/// Runs a parsed command line and returns its stdout summary.
pub fn run(cli: &Cli) -> CliResult<Value> {
    let g = &cli.global;
    match &cli.command {
        Command::Canonicalize { input, output } => cmd_canonicalize(input, output),
        Command::Shapes => cmd_shapes(&out_dir(g)?),
        Command::Render { scene } => cmd_render(scene, &load_intrinsics(g)?, &out_dir(g)?),
        Command::Composite(args) => cmd_composite(g, args),
        Command::Fit(args) => cmd_fit(g, args),
        Command::Eval(args) => cmd_eval(g, args),
        Command::ProjectError { pose_a, pose_b, model } => {
            cmd_project_error(pose_a, pose_b, model, &load_intrinsics(g)?)
        }
    }
}

pub fn cmd_canonicalize(input: &Path, output: &Path) -> CliResult<Value> {
    let mesh = canonical::read_obj(input)?;
    let c = canonicalize(&mesh)?;
    canonical::write_canonical(output, &c)?;
    Ok(json!({
        "output": output,
        "source_scale": c.source_scale,
        "nocs_extents": [c.nocs_extents.x, c.nocs_extents.y, c.nocs_extents.z],
    }))
}

pub fn cmd_shapes(out: &Path) -> CliResult<Value> {
    let mut written = Vec::new();
    for name in shapes::CATEGORY_NAMES {
        let c = shapes::nominal(name).expect("built-in category");
        let path = out.join(format!("{name}.obj"));
        canonical::write_canonical(&path, &c)?;
        written.push(path);
    }
    Ok(json!({ "meshes": written }))
}

/// Mesh paths in a scene file are resolved relative to the file.
pub fn cmd_render(scene_path: &Path, intr: &Intrinsics, out: &Path) -> CliResult<Value> {
    let mut scene: SceneRecord = io::read_json(scene_path)?;
    if scene.width != intr.width || scene.height != intr.height {
        return Err(Error::invalid("scene size differs from intrinsics").into());
    }
    let base = scene_path.parent().unwrap_or(Path::new("."));
    let mut instances = Vec::with_capacity(scene.instances.len());
    for rec in &scene.instances {
        let mesh_path = rec
            .mesh
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("instance {} has no mesh path", rec.instance_id)))?;
        let mesh = Arc::new(canonical::read_canonical(&base.join(mesh_path))?);
        instances.push(SceneInstance {
            mesh,
            pose: rec.pose.to_transform()?,
            class_id: rec.class_id,
            instance_id: rec.instance_id,
            handle_visible: None,
        });
    }
    let rendered = render_scene(&instances, intr)?;
    for (rec, inst) in scene.instances.iter_mut().zip(&instances) {
        rec.dimensions = inst.dimensions().into();
        rec.handle_visible = if inst.mesh.mesh.handle.is_some() {
            Some(handle_visibility(inst, &rendered.mask, intr, DEFAULT_HANDLE_MIN_PIXELS)?)
        } else {
            None
        };
    }
    let paths = FramePaths::new(out, &scene.image_id);
    io::write_nocs_png(&paths.nocs, &rendered.nocs)?;
    io::write_depth_png(&paths.depth, &rendered.depth)?;
    io::write_mask_png(&paths.mask, &rendered.mask)?;
    io::write_json(&paths.meta, &scene)?;
    Ok(json!({ "image_id": scene.image_id, "valid_pixels": rendered.nocs.valid_count() }))
}

fn frame_id(index: usize) -> String {
    format!("{index:04}")
}

pub fn cmd_composite(g: &GlobalOpts, args: &CompositeArgs) -> CliResult<Value> {
    let intr = load_intrinsics(g)?;
    let table = load_table(g)?;
    let out = out_dir(g)?;
    let backgrounds: Vec<Background> = match &args.backgrounds {
        Some(dir) => {
            let ids = io::list_ids(dir, "_depth.png")?;
            if ids.is_empty() {
                return Err(Error::invalid(format!("no *_depth.png backgrounds in {}", dir.display())).into());
            }
            ids.iter()
                .map(|id| Background::load(&dir.join(format!("{id}_rgb.png")), &dir.join(format!("{id}_depth.png")), intr))
                .collect::<Result<_, _>>()?
        }
        None => Vec::new(),
    };
    let cfg = FrameConfig {
        objects: [args.min_objects, args.max_objects],
        ..Default::default()
    };
    let results: Vec<CliResult<usize>> = with_threads(g.threads, || {
        (0..args.frames)
            .into_par_iter()
            .map(|i| -> CliResult<usize> {
                let seed = compositor::frame_seed(g.seed, i as u64);
                let synthetic;
                let bg = if backgrounds.is_empty() {
                    synthetic = compositor::synthetic_tabletop(&intr, &TabletopConfig::default(), seed)?;
                    &synthetic
                } else {
                    &backgrounds[i % backgrounds.len()]
                };
                let id = frame_id(i);
                let frame = compositor::generate_frame(bg, &table, &id, seed, &cfg)?;
                let paths = FramePaths::new(&out, &id);
                io::write_rgb_png(&paths.rgb, &frame.rgb)?;
                io::write_nocs_png(&paths.nocs, &frame.nocs)?;
                io::write_depth_png(&paths.depth, &frame.depth)?;
                io::write_mask_png(&paths.mask, &frame.mask)?;
                io::write_json(&paths.meta, &frame.scene)?;
                Ok(frame.scene.instances.len())
            })
            .collect()
    })?;
    let mut instances = 0;
    for r in results {
        instances += r?;
    }
    io::write_json(&out.join("intrinsics.json"), &intr)?;
    Ok(json!({ "frames": args.frames, "instances": instances }))
}

struct FitOutcome {
    attempted: usize,
    failed: Vec<String>,
}

fn fit_image(
    id: &str,
    args: &FitArgs,
    intr: &Intrinsics,
    table: &CategoryTable,
    cfg: &FitConfig,
    out: &Path,
) -> CliResult<FitOutcome> {
    let paths = FramePaths::new(&args.input, id);
    let scene: SceneRecord = io::read_json(&paths.meta)?;
    let mask = io::read_mask_png(&paths.mask)?;
    let depth = io::read_depth_png(&paths.depth)?;
    let nocs = io::read_nocs_png(&paths.nocs, &mask)?;
    let mut detections = Vec::new();
    let mut failed = Vec::new();
    for rec in &scene.instances {
        let prior = table
            .get(rec.class_id)
            .and_then(|c| c.nocs_extents)
            .map(Vector3::from)
            .filter(|_| args.extents == ExtentSource::Prior);
        match estimate_pose(&nocs, &depth, &mask, rec.instance_id, intr, prior, cfg) {
            Ok(fit) => {
                let observed = fit.inliers.len().max(1);
                let total = mask.count(rec.instance_id).max(observed);
                detections.push(DetectionRecord {
                    class_id: rec.class_id,
                    score: observed as f64 / total as f64,
                    pose: PoseRecord::from(&fit.transform),
                    dimensions: fit.dimensions.into(),
                    inlier_count: fit.inlier_count,
                    rmse: fit.rmse,
                    instance_id: Some(rec.instance_id),
                });
            }
            Err(e) => failed.push(format!("{id}/{}: {e}", rec.instance_id)),
        }
    }
    io::write_json(
        &FramePaths::new(out, id).pred,
        &PredictionRecord {
            image_id: id.to_string(),
            detections,
        },
    )?;
    Ok(FitOutcome {
        attempted: scene.instances.len(),
        failed,
    })
}

/// Instance ids and classes come from each frame's metadata; poses in it
/// are ignored.
pub fn cmd_fit(g: &GlobalOpts, args: &FitArgs) -> CliResult<Value> {
    let intr = load_intrinsics(g)?;
    let table = load_table(g)?;
    let out = out_dir(g)?;
    let cfg = FitConfig {
        ransac_iterations: args.ransac_iterations,
        inlier_threshold: args.inlier_threshold,
        rng_seed: g.seed,
        ..Default::default()
    };
    cfg.validate()?;
    let ids = io::list_ids(&args.input, "_meta.json")?;
    let results: Vec<CliResult<FitOutcome>> = with_threads(g.threads, || {
        ids.par_iter()
            .map(|id| fit_image(id, args, &intr, &table, &cfg, &out))
            .collect()
    })?;
    let (mut attempted, mut failed) = (0, Vec::new());
    for r in results {
        let r = r?;
        attempted += r.attempted;
        failed.extend(r.failed);
    }
    for f in &failed {
        eprintln!("{}", json!({ "warning": "FitFailed", "message": f }));
    }
    if attempted > 0 && failed.len() == attempted {
        return Err(CliError {
            code: EXIT_FIT_FAILED,
            kind: "FitFailed".into(),
            message: format!("pose fitting failed on all {attempted} instances"),
            ids: Vec::new(),
        });
    }
    Ok(json!({ "images": ids.len(), "instances": attempted, "failed": failed.len() }))
}

pub fn cmd_eval(g: &GlobalOpts, args: &EvalArgs) -> CliResult<Value> {
    let table = load_table(g)?;
    let out = out_dir(g)?;
    let images = eval::load_dataset(&args.pred, &args.gt)?;
    let cfg = EvalConfig::default();
    let matches = with_threads(g.threads, || {
        images
            .par_iter()
            .map(|im| eval::match_detections(&im.image_id, &im.detections, &im.ground_truth, &table, cfg.match_iou, cfg.angular_step))
            .collect()
    })?;
    let report = eval::summarize(matches, &table, &cfg);
    eval::write_table_csv(&report, &out.join("table.csv"))?;
    eval::write_curves_csv(&report, &out)?;
    io::write_json(&out.join("report.json"), &report)?;
    let mean: serde_json::Map<String, Value> = report
        .columns
        .iter()
        .zip(&report.mean)
        .map(|(c, m)| (c.clone(), json!(m)))
        .collect();
    Ok(json!({ "images": images.len(), "mAP": mean, "absent_classes": report.absent }))
}

pub fn cmd_project_error(pose_a: &Path, pose_b: &Path, model: &Path, intr: &Intrinsics) -> CliResult<Value> {
    let a = io::read_json::<PoseRecord>(pose_a)?.to_transform()?;
    let b = io::read_json::<PoseRecord>(pose_b)?.to_transform()?;
    let mesh = canonical::read_canonical(model)?;
    let points = PointCloud::new(mesh.mesh.vertices.iter().map(|v| v - NOCS_CENTER).collect());
    let err = projection_error_2d(&a, &b, &points, intr)?;
    Ok(json!({ "mean_pixel_error": err }))
}
