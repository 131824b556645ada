//! `binpick` command line: `plan`, `eval`, `gen` and `render`.
//!
//! Exit codes: 0 success, 1 error, 2 no valid grasp (`plan` only).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Serialize};

use crate::camgeom::{CameraConfig, CameraModel};
use crate::maskio::{self, GroundTruthScene, InstanceLabelMap};
use crate::metrics::{self, EvalConfig};
use crate::planner::{self, PlannerConfig, PoseDocument};
use crate::render;
use crate::scenegen::{self, Perturbation, SceneConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_GRASP: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "binpick", version, about = "Segmentation-driven grasp planning for bin-picking")]
pub struct Cli {
    /// Random seed; overrides the seed in config documents.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (`render`: output image path).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress the summary line on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan the best grasp for a segmented scene.
    Plan(PlanArgs),
    /// Score predicted label maps against ground truth (AP/AR).
    Eval(EvalArgs),
    /// Generate synthetic bin scenes.
    Gen(GenArgs),
    /// Draw an instance overlay, optionally with a grasp pose.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    /// Gripper and grasp-rectangle document.
    #[arg(long)]
    pub gripper: PathBuf,
    /// Depth in meters used instead of the camera's nominal depth.
    #[arg(long)]
    pub depth_m: Option<f64>,
    #[arg(long)]
    pub gw_px: Option<u32>,
    #[arg(long)]
    pub gb_px: Option<u32>,
    /// Number of sampled angles.
    #[arg(long)]
    pub angles: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_detections: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// Also write degraded copies of each scene to `<out>/predictions`.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Erode or dilate the degraded masks by one pixel.
    #[arg(long, requires = "noise")]
    pub morph: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub pose: Option<PathBuf>,
    /// RGB image to draw over.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

/// Run record written next to every command's outputs.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_paths: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_time_s: f64,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let started = Instant::now();
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| anyhow!("--out is required"))?;
    let (code, command, configs, manifest_path) = match &cli.command {
        Command::Plan(a) => {
            let code = cmd_plan(a, out, cli.quiet)?;
            let configs = vec![&a.labels, &a.scores, &a.camera, &a.gripper];
            (code, "plan", configs, out.join("manifest.json"))
        }
        Command::Eval(a) => {
            cmd_eval(a, out, cli.quiet)?;
            let mut configs = vec![&a.pred, &a.gt];
            configs.extend(a.config.as_ref());
            (EXIT_OK, "eval", configs, out.join("manifest.json"))
        }
        Command::Gen(a) => {
            cmd_gen(a, cli.seed, out, cli.quiet)?;
            (EXIT_OK, "gen", vec![&a.config], out.join("manifest.json"))
        }
        Command::Render(a) => {
            cmd_render(a, out)?;
            let mut configs = vec![&a.labels];
            configs.extend(a.pose.as_ref());
            configs.extend(a.image.as_ref());
            (EXIT_OK, "render", configs, out.with_extension("manifest.json"))
        }
    };
    let manifest = RunManifest {
        command: command.to_string(),
        config_paths: configs.iter().map(|p| p.display().to_string()).collect(),
        seed: cli.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(code)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn cmd_plan(a: &PlanArgs, out: &Path, quiet: bool) -> Result<i32> {
    let map = maskio::load_label_map(&a.labels, &a.scores)?;
    let cam_cfg: CameraConfig = read_json(&a.camera)?;
    let cam = CameraModel::try_from(&cam_cfg).with_context(|| format!("camera {}", a.camera.display()))?;
    let mut cfg: PlannerConfig = read_json(&a.gripper)?;
    if let Some(v) = a.gw_px {
        cfg.gw_px = v;
    }
    if let Some(v) = a.gb_px {
        cfg.gb_px = v;
    }
    if let Some(v) = a.angles {
        cfg.angles = v;
    }
    let rect = cfg.rect()?;
    let gripper = cfg.gripper()?;

    let outcome = planner::plan(&map, &rect, &gripper, &cam, a.depth_m)?;
    let depth = a.depth_m.unwrap_or(cam.nominal_depth());
    let docs: Vec<PoseDocument> = outcome
        .candidates
        .iter()
        .map(|p| PoseDocument::from_pose(p, &rect, &cam, depth))
        .collect();

    ensure_dir(out)?;
    write_json(&out.join("candidates.json"), &docs)?;
    match outcome.best_index {
        Some(i) => {
            let best = &docs[i];
            write_json(&out.join("pose.json"), best)?;
            if !quiet {
                println!(
                    "valid grasp: instance {} center ({:.2}, {:.2}) angle {:.4} rad width {:.2} px Q={:.3}",
                    best.instance, best.center_px[0], best.center_px[1], best.angle_rad, best.width_px, best.quality
                );
            }
            Ok(EXIT_OK)
        }
        None => {
            write_json(&out.join("pose.json"), &serde_json::json!({ "valid": false }))?;
            if !quiet {
                println!("no valid grasp among {} candidates", docs.len());
            }
            Ok(EXIT_NO_GRASP)
        }
    }
}

/// Pairs prediction and ground-truth scenes by stem. A prediction directory
/// with no scenes at all counts as "no detections" for every image.
fn paired_scenes(pred_dir: &Path, gt_dir: &Path) -> Result<(Vec<InstanceLabelMap>, Vec<GroundTruthScene>)> {
    let gt_stems = maskio::list_scene_stems(gt_dir)?;
    let pred_stems = maskio::list_scene_stems(pred_dir)?;
    if !pred_stems.is_empty() {
        let only_gt: Vec<&String> = gt_stems.iter().filter(|s| !pred_stems.contains(s)).collect();
        let only_pred: Vec<&String> = pred_stems.iter().filter(|s| !gt_stems.contains(s)).collect();
        if !only_gt.is_empty() || !only_pred.is_empty() {
            bail!(
                "unmatched scene stems; ground truth only: {:?}; predictions only: {:?}",
                only_gt,
                only_pred
            );
        }
    }
    let mut preds = Vec::with_capacity(gt_stems.len());
    let mut gts = Vec::with_capacity(gt_stems.len());
    for stem in &gt_stems {
        let gt_map = maskio::load_scene(gt_dir, stem).with_context(|| format!("ground truth {stem}"))?;
        let pred = if pred_stems.is_empty() {
            InstanceLabelMap::new(
                gt_map.width(),
                gt_map.height(),
                vec![0; gt_map.labels().len()],
                Default::default(),
            )?
        } else {
            maskio::load_scene(pred_dir, stem).with_context(|| format!("prediction {stem}"))?
        };
        gts.push(GroundTruthScene::from_label_map(gt_map).with_context(|| format!("ground truth {stem}"))?);
        preds.push(pred);
    }
    Ok((preds, gts))
}

pub fn cmd_eval(a: &EvalArgs, out: &Path, quiet: bool) -> Result<()> {
    let mut cfg: EvalConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => EvalConfig::default(),
    };
    if let Some(m) = a.max_detections {
        cfg.max_detections = m;
    }
    let (preds, gts) = paired_scenes(&a.pred, &a.gt)?;
    let report = metrics::evaluate(&preds, &gts, &cfg)?;
    ensure_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    if !quiet {
        println!("AP={:.4} AR={:.4} images={}", report.ap, report.ar, gts.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct GenMeta<'a> {
    config: &'a SceneConfig,
    count: usize,
    base_seed: u64,
    perturbation: Option<PerturbMeta>,
    scenes: Vec<SceneMeta>,
}

#[derive(Serialize)]
struct PerturbMeta {
    noise: f64,
    morph: bool,
}

#[derive(Serialize)]
struct SceneMeta {
    stem: String,
    seed: u64,
    instances: Vec<maskio::InstanceRecord>,
}

pub fn cmd_gen(a: &GenArgs, seed: Option<u64>, out: &Path, quiet: bool) -> Result<()> {
    let mut cfg: SceneConfig = read_json(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if let Some(noise) = a.noise {
        if !(0.0..=1.0).contains(&noise) {
            bail!("--noise must lie in [0, 1], got {noise}");
        }
    }
    ensure_dir(out)?;
    let pred_dir = out.join("predictions");
    if a.noise.is_some() {
        ensure_dir(&pred_dir)?;
    }

    let seeds = scenegen::batch_seeds(cfg.seed, a.count);
    let mut scenes = Vec::with_capacity(a.count);
    for (i, &scene_seed) in seeds.iter().enumerate() {
        let stem = format!("scene_{i:04}");
        let scene = scenegen::generate(&SceneConfig {
            seed: scene_seed,
            ..cfg.clone()
        })?;
        let gt = &scene.ground_truth;
        maskio::save_scene(gt.labelmap(), out, &stem)?;
        if let Some(noise) = a.noise {
            let pred = scenegen::perturb_scores(
                gt,
                &Perturbation {
                    noise,
                    morph: a.morph,
                    seed: scene_seed,
                },
            )?;
            maskio::save_scene(&pred, &pred_dir, &stem)?;
        }
        scenes.push(SceneMeta {
            stem,
            seed: scene_seed,
            instances: gt.instances().to_vec(),
        });
    }
    let meta = GenMeta {
        config: &cfg,
        count: a.count,
        base_seed: cfg.seed,
        perturbation: a.noise.map(|noise| PerturbMeta { noise, morph: a.morph }),
        scenes,
    };
    write_json(&out.join("meta.json"), &meta)?;
    if !quiet {
        println!("wrote {} scenes to {}", a.count, out.display());
    }
    Ok(())
}

pub fn cmd_render(a: &RenderArgs, out: &Path) -> Result<()> {
    let (w, h, labels) = maskio::load_label_raster(&a.labels)?;
    let map = InstanceLabelMap::with_unit_scores(w, h, labels)?;
    let base = match &a.image {
        Some(p) => {
            let img = image::open(p)
                .with_context(|| format!("reading {}", p.display()))?
                .to_rgb8();
            if img.dimensions() != (w, h) {
                bail!("base image is {:?}, labels are {}x{}", img.dimensions(), w, h);
            }
            Some(img)
        }
        None => None,
    };
    let mut img = render::colorize(&map, base.as_ref());
    if let Some(p) = &a.pose {
        let pose: PoseDocument = read_json(p).with_context(|| "invalid pose document")?;
        render::draw_pose(&mut img, &map, &pose);
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    img.save_with_format(out, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
