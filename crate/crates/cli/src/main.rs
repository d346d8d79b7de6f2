//! Command-line driver: dataset synthesis, training, sampling, evaluation,
//! and ablation studies.
//!
//! Every command is deterministic under a fixed `--seed` and config; all
//! randomness is derived from named sub-streams of the root seed. Exit
//! codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use gdn_core::diffusion::{
    sample as sample_grasps, Denoiser, GuidanceContext, SamplerConfig, SamplerKind,
};
use gdn_core::geometry::GraspPose;
use gdn_core::guidance::{cloud_spheres, GuidanceConfig};
use gdn_core::igso3::CdfCache;
use gdn_core::io::{
    self, load_checkpoint, load_config, read_dataset, save_checkpoint, write_dataset, RunConfig,
};
use gdn_core::metrics::{self, ResultRow};
use gdn_core::model::{
    adam_step, loss_and_grads, AdamState, DenoiserParams, ModelDenoiser, SceneBatch,
};
use gdn_core::scene::{
    synthesize_scene, GraspGenConfig, ObjectKind, ObjectModel, SceneRecord, VirtualCamera,
};
use gdn_core::schedule::NoiseSchedule;
use gdn_core::{rng, Error, Result, Rotation64, Vec3};

#[derive(Parser)]
#[command(name = "gdn", version, about = "Grasp diffusion on SO(3) x R^3")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled grasp dataset of primitive-object scenes.
    GenData(GenDataArgs),
    /// Train the denoiser on a dataset.
    Train(TrainArgs),
    /// Sample grasps for one scene from a trained checkpoint.
    Sample(SampleArgs),
    /// Evaluate a grasp set against a scene.
    Eval(EvalArgs),
    /// Run an ablation study grid.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory (falls back to GDN_DATA_DIR, then the config).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured step count.
    #[arg(long)]
    steps: Option<u64>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    max_seconds: Option<u64>,
    /// Resume from an existing checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SamplerArg {
    Ddpm,
    Ddim,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory holding the conditioning scene.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    scene_index: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_enum, default_value_t = SamplerArg::Ddpm)]
    sampler: SamplerArg,
    /// DDIM step count.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 0.75)]
    temp: f64,
    /// Enable collision-cost guidance.
    #[arg(long)]
    guided: bool,
    /// Extra refinement steps at index 0 when guided.
    #[arg(long, default_value_t = 3)]
    guide_k: usize,
    /// Intermediate gradient steps per guided update.
    #[arg(long, default_value_t = 2)]
    guide_m: usize,
    /// Base guidance step size (scaled by the inverse posterior variance).
    #[arg(long, default_value_t = gdn_core::guidance::GuidanceConfig::default().lambda)]
    guide_lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; a summary lands next to it with a .json extension.
    #[arg(long, default_value = "grasps.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Grasp CSV in the world frame (tx ty tz r11..r33).
    #[arg(long)]
    grasps: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    scene_index: usize,
    /// Rotation weight of the EMD ground metric, m/rad (normalized units).
    #[arg(long, default_value_t = metrics::DEFAULT_ROTATION_WEIGHT)]
    w: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "eval.csv")]
    out: PathBuf,
    /// Record real wall-clock times (makes output nondeterministic).
    #[arg(long)]
    timings: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Study {
    Temp,
    Ddim,
    Guidance,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, value_enum)]
    study: Study,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Scenes evaluated per grid cell.
    #[arg(long, default_value_t = 5)]
    scenes: usize,
    /// Grasps sampled per scene.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    timings: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

/// Dataset root precedence: --data flag, then GDN_DATA_DIR, then config.
fn resolve_data_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(d) = flag {
        return Ok(d);
    }
    if let Ok(env_dir) = std::env::var("GDN_DATA_DIR") {
        return Ok(PathBuf::from(env_dir));
    }
    cfg.data_dir.clone().ok_or_else(|| {
        Error::Config("no dataset directory: pass --data or set GDN_DATA_DIR".into())
    })
}

fn load_gripper(cfg: &RunConfig) -> Result<gdn_core::guidance::GripperModel<f64>> {
    match &cfg.gripper_model {
        Some(path) => io::load_gripper_model(path),
        None => Ok(io::default_gripper_model(cfg.data.gripper_opening)),
    }
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let gripper = load_gripper(&cfg)?;
    let grasp_cfg = GraspGenConfig {
        opening: cfg.data.gripper_opening,
        azimuth_modes: cfg.data.azimuth_modes,
        perturbed_fraction: cfg.data.perturbed_fraction,
        clearance: cfg.data.cloud_sphere_radius,
        ..GraspGenConfig::default()
    };
    let mut records = Vec::with_capacity(cfg.data.n_scenes);
    for scene_idx in 0..cfg.data.n_scenes {
        records.push(make_scene(&cfg, scene_idx, &grasp_cfg, &gripper)?);
    }
    write_dataset(&args.out, &records)?;
    let positives: usize = records
        .iter()
        .map(|r| r.labels.iter().filter(|l| **l).count())
        .sum();
    let total: usize = records.iter().map(|r| r.labels.len()).sum();
    println!(
        "wrote {} scenes ({} grasps, {:.1}% successful) to {} in {} ms",
        records.len(),
        total,
        100.0 * positives as f64 / total.max(1) as f64,
        args.out.display(),
        start.elapsed().as_millis()
    );
    Ok(())
}

fn make_scene(
    cfg: &RunConfig,
    scene_idx: usize,
    grasp_cfg: &GraspGenConfig,
    gripper: &gdn_core::guidance::GripperModel<f64>,
) -> Result<SceneRecord<f64>> {
    // A handful of deterministic re-draws in case a camera angle leaves
    // too few surface hits.
    let mut last_err = None;
    for attempt in 0..10u64 {
        let mut rng = rng::indexed_stream(cfg.seed, "data", ((scene_idx as u64) << 8) | attempt);
        let spec = &cfg.data.objects[rng.random_range(0..cfg.data.objects.len())];
        let kind = match spec {
            io::ObjectSpec::Box { width, depth, height } => ObjectKind::Box {
                width: rng.random_range(width[0]..=width[1]),
                depth: rng.random_range(depth[0]..=depth[1]),
                height: rng.random_range(height[0]..=height[1]),
            },
            io::ObjectSpec::Cylinder { radius, height } => ObjectKind::Cylinder {
                radius: rng.random_range(radius[0]..=radius[1]),
                height: rng.random_range(height[0]..=height[1]),
            },
        };
        let yaw = if cfg.data.random_yaw {
            rng.random_range(0.0..std::f64::consts::TAU)
        } else {
            0.0
        };
        let object = ObjectModel::new(kind, GraspPose::new(Vec3::zeros(), Rotation64::rot_z(yaw)))?;
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let elevation = rng
            .random_range(cfg.data.camera_elevation_deg[0]..=cfg.data.camera_elevation_deg[1])
            .to_radians();
        let r = cfg.data.camera_radius;
        let camera = VirtualCamera::new(
            Vec3::new(
                r * elevation.cos() * azimuth.cos(),
                r * elevation.cos() * azimuth.sin(),
                r * elevation.sin(),
            ),
            Vec3::zeros(),
            cfg.data.image_width,
            cfg.data.image_height,
            cfg.data.fov_deg.to_radians(),
        )?;
        match synthesize_scene(
            object,
            camera,
            cfg.data.points_per_cloud,
            cfg.data.grasps_per_scene,
            grasp_cfg,
            gripper,
            &mut rng,
        ) {
            Ok(rec) => return Ok(rec),
            Err(e @ Error::NoFeasibleGrasp(_)) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Numeric("scene synthesis failed".into())))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let data_dir = resolve_data_dir(args.data, &cfg)?;
    let records = read_dataset(&data_dir)?;
    if records.is_empty() {
        return Err(Error::Integrity("dataset is empty".into()));
    }
    let positives: Vec<Vec<GraspPose<f64>>> = records.iter().map(|r| r.positive_grasps()).collect();
    if positives.iter().all(|p| p.is_empty()) {
        return Err(Error::Integrity("dataset has no successful grasps".into()));
    }
    let schedule = NoiseSchedule::<f64>::cosine(cfg.schedule.n_steps)?;
    let cache = CdfCache::new();

    let (mut params, mut adam, start_step) = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.denoiser != cfg.denoiser {
                return Err(Error::Config(
                    "resume checkpoint's denoiser config differs from the run config".into(),
                ));
            }
            let adam = ckpt.adam.unwrap_or_else(|| AdamState::new(&ckpt.params));
            (ckpt.params, adam, ckpt.train_step)
        }
        None => {
            let mut init_rng = rng::stream(cfg.seed, "init");
            let params = DenoiserParams::<f64>::init(&cfg.denoiser, &mut init_rng)?;
            let adam = AdamState::new(&params);
            (params, adam, 0)
        }
    };

    let total_steps = args.steps.unwrap_or(cfg.training.steps);
    let budget = args.max_seconds.or(cfg.training.max_seconds);
    let lr = cfg.training.learning_rate;
    let mut loss_curve = String::from("step,loss\n");
    let mut last_loss = f64::NAN;

    let mut step = start_step;
    while step < total_steps {
        if let Some(limit) = budget {
            if start.elapsed().as_secs() >= limit {
                println!("wall-clock budget reached at step {step}");
                break;
            }
        }
        let mut step_rng = rng::indexed_stream(cfg.seed, "train", step);
        let mut chosen: Vec<(usize, Vec<GraspPose<f64>>)> = Vec::new();
        for _ in 0..cfg.training.batch_scenes {
            // Scenes without positives are skipped by redrawing.
            let mut scene = step_rng.random_range(0..records.len());
            let mut tries = 0;
            while positives[scene].is_empty() && tries < 100 {
                scene = step_rng.random_range(0..records.len());
                tries += 1;
            }
            let pool = &positives[scene];
            let grasps: Vec<GraspPose<f64>> = (0..cfg.training.batch_grasps_per_scene)
                .map(|_| pool[step_rng.random_range(0..pool.len())])
                .collect();
            chosen.push((scene, grasps));
        }
        let batches: Vec<SceneBatch<'_, f64>> = chosen
            .iter()
            .map(|(scene, grasps)| SceneBatch {
                cloud: &records[*scene].cloud,
                grasps,
            })
            .collect();
        let (loss, grads) = loss_and_grads(
            &batches,
            &schedule,
            &params,
            &cfg.denoiser,
            &cache,
            &mut step_rng,
        )
        .map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!(
                "{msg} at step {step} (last finite loss {last_loss})"
            )),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss diverged at step {step} (last finite loss {last_loss})"
            )));
        }
        adam_step(&mut params, &grads, &mut adam, lr);
        last_loss = loss;
        step += 1;
        loss_curve.push_str(&format!("{step},{loss}\n"));
        if cfg.training.checkpoint_every > 0
            && step % cfg.training.checkpoint_every == 0
            && step < total_steps
        {
            let interim = args.out.with_extension(format!("step{step}.ckpt"));
            save_checkpoint(&interim, &params, &cfg.denoiser, schedule.n(), step, Some(&adam))?;
        }
    }
    save_checkpoint(&args.out, &params, &cfg.denoiser, schedule.n(), step, Some(&adam))?;
    std::fs::write(loss_curve_path(&args.out), loss_curve)?;
    println!(
        "trained to step {step} (last loss {last_loss:.6}) in {} s; checkpoint at {}",
        start.elapsed().as_secs(),
        args.out.display()
    );
    Ok(())
}

fn loss_curve_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".loss.csv");
    ckpt.with_file_name(name)
}

fn sampler_config_from_flags(
    sampler: SamplerArg,
    steps: usize,
    temp: f64,
    guided: bool,
    guide_k: usize,
    guide_m: usize,
    guide_lambda: f64,
) -> SamplerConfig {
    SamplerConfig {
        kind: match sampler {
            SamplerArg::Ddpm => SamplerKind::Ddpm,
            SamplerArg::Ddim => SamplerKind::Ddim,
        },
        steps,
        temp_alpha: temp,
        guidance: guided.then(|| GuidanceConfig {
            k: guide_k,
            m: guide_m,
            lambda: guide_lambda,
            ..GuidanceConfig::default()
        }),
        ..SamplerConfig::default()
    }
}

fn guidance_context(record: &SceneRecord<f64>, opening: f64) -> Result<GuidanceContext<f64>> {
    Ok(GuidanceContext {
        gripper: io::default_gripper_model(opening),
        obstacles: cloud_spheres(
            &record.cloud_world(),
            gdn_core::guidance::DEFAULT_CLOUD_SPHERE_RADIUS,
        )?,
        center: record.center,
        scale: record.scale,
    })
}

/// Samples from a checkpointed model on one scene; returns world-frame poses.
#[allow(clippy::too_many_arguments)]
fn sample_scene(
    params: &DenoiserParams<f64>,
    denoiser_cfg: &gdn_core::model::DenoiserConfig,
    schedule: &NoiseSchedule<f64>,
    cache: &CdfCache,
    record: &SceneRecord<f64>,
    sampler: &SamplerConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<GraspPose<f64>>> {
    let denoiser = ModelDenoiser::new(params, denoiser_cfg, &record.cloud)?;
    let gctx = match &sampler.guidance {
        Some(_) => Some(guidance_context(record, 0.08)?),
        None => None,
    };
    let normalized = sample_grasps(
        &denoiser as &dyn Denoiser<f64>,
        n,
        sampler,
        schedule,
        cache,
        gctx.as_ref(),
        seed,
    )?;
    Ok(normalized.iter().map(|g| record.denormalize_pose(g)).collect())
}

const GRASP_CSV_HEADER: &str = "tx,ty,tz,r11,r12,r13,r21,r22,r23,r31,r32,r33";

fn write_grasp_csv(path: &Path, grasps: &[GraspPose<f64>]) -> Result<()> {
    let mut text = String::from(GRASP_CSV_HEADER);
    text.push('\n');
    for g in grasps {
        let row = io::pose_to_row(g);
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_grasp_csv(path: &Path) -> Result<Vec<GraspPose<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("tx") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Integrity(format!(
                "{}:{}: expected 12 fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let mut row = [0.0f64; 12];
        for (k, f) in fields.iter().enumerate() {
            row[k] = f.parse::<f64>().map_err(|e| {
                Error::Integrity(format!(
                    "{}:{}: bad number {f:?}: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
        }
        out.push(io::pose_from_row(&row));
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("{}: no grasps found", path.display())));
    }
    Ok(out)
}

fn load_scene(dir: &Path, index: usize) -> Result<SceneRecord<f64>> {
    let mut records = read_dataset(dir)?;
    if index >= records.len() {
        return Err(Error::invalid(format!(
            "scene index {index} out of range ({} scenes)",
            records.len()
        )));
    }
    Ok(records.swap_remove(index))
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let start = Instant::now();
    let ckpt = load_checkpoint(&args.ckpt)?;
    let record = load_scene(&args.scene, args.scene_index)?;
    let schedule = NoiseSchedule::<f64>::cosine(ckpt.n_steps)?;
    let cache = CdfCache::new();
    let sampler = sampler_config_from_flags(
        args.sampler,
        args.steps,
        args.temp,
        args.guided,
        args.guide_k,
        args.guide_m,
        args.guide_lambda,
    );
    sampler.validate(schedule.n())?;
    let grasps = sample_scene(
        &ckpt.params,
        &ckpt.denoiser,
        &schedule,
        &cache,
        &record,
        &sampler,
        args.n,
        args.seed,
    )?;
    write_grasp_csv(&args.out, &grasps)?;
    let summary = serde_json::json!({
        "n": args.n,
        "sampler": match args.sampler { SamplerArg::Ddpm => "ddpm", SamplerArg::Ddim => "ddim" },
        "steps": if args.sampler == SamplerArg::Ddim { args.steps } else { schedule.n() },
        "temp_alpha": args.temp,
        "guided": args.guided,
        "guide_k": args.guide_k,
        "guide_m": args.guide_m,
        "seed": args.seed,
        "scene_index": args.scene_index,
        "grasps_csv": args.out.display().to_string(),
    });
    let summary_path = args.out.with_extension("json");
    std::fs::write(&summary_path, format!("{summary:#}\n"))?;
    println!(
        "sampled {} grasps to {} in {} ms",
        args.n,
        args.out.display(),
        start.elapsed().as_millis()
    );
    Ok(())
}

/// Success, EMD (vs the scene's ground-truth positives, normalized frame),
/// and collision rate for a world-frame grasp set. `check_frame` rejects
/// input whose median normalized translation is orders of magnitude off the
/// scene (wrong units or wrong scene); model outputs skip it, since a badly
/// trained model may legitimately scatter and should just score zero.
fn evaluate_set(
    grasps: &[GraspPose<f64>],
    record: &SceneRecord<f64>,
    w: f64,
    seed: u64,
    check_frame: bool,
) -> Result<(f64, f64, f64)> {
    let gripper = io::default_gripper_model(0.08);
    let success = metrics::success_rate(grasps, &record.object, 0.08, &gripper, 0.004)?;
    let normalized: Vec<GraspPose<f64>> = grasps.iter().map(|g| record.normalize_pose(g)).collect();
    if check_frame {
        let mut norms: Vec<f64> = normalized.iter().map(|g| g.translation.norm()).collect();
        norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = norms[norms.len() / 2];
        if median > 100.0 {
            return Err(Error::invalid(format!(
                "grasps do not denormalize into the scene frame (median normalized                  translation {median:.1}; frame mismatch?)"
            )));
        }
    }
    let truth = record.positive_grasps();
    if truth.is_empty() {
        return Err(Error::invalid("scene has no ground-truth positive grasps"));
    }
    let emd = metrics::emd(&normalized, &truth, w, seed)?;
    let spheres = cloud_spheres(
        &record.cloud_world(),
        gdn_core::guidance::DEFAULT_CLOUD_SPHERE_RADIUS,
    )?;
    let collision = metrics::collision_rate(grasps, &spheres, &gripper)?;
    Ok((success, emd, collision))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let grasps = read_grasp_csv(&args.grasps)?;
    let record = load_scene(&args.scene, args.scene_index)?;
    let (success, emd, collision) = evaluate_set(&grasps, &record, args.w, args.seed, true)?;
    let row = ResultRow {
        scene_id: format!("{}#{}", args.scene.display(), args.scene_index),
        method: "eval".into(),
        success_rate: success,
        emd,
        collision_rate: collision,
        wall_time_ms: if args.timings {
            start.elapsed().as_millis() as u64
        } else {
            0
        },
    };
    let mut text = String::from(ResultRow::CSV_HEADER);
    text.push('\n');
    text.push_str(&row.to_csv());
    text.push('\n');
    std::fs::write(&args.out, text)?;
    println!("{}", ResultRow::CSV_HEADER);
    println!("{}", row.to_csv());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let data_dir = resolve_data_dir(args.data, &cfg)?;
    let records = read_dataset(&data_dir)?;
    if records.is_empty() {
        return Err(Error::Integrity("dataset is empty".into()));
    }
    let ckpt = load_checkpoint(&args.ckpt)?;
    let schedule = NoiseSchedule::<f64>::cosine(ckpt.n_steps)?;
    let cache = CdfCache::new();
    let scenes: Vec<&SceneRecord<f64>> = records.iter().take(args.scenes.max(1)).collect();
    let seed = cfg.seed;
    let w = metrics::DEFAULT_ROTATION_WEIGHT;

    // Averages (success, emd, collision, wall ms) over the eval scenes.
    let run_cell = |sampler: &SamplerConfig| -> Result<(f64, f64, f64, u64)> {
        let mut acc = (0.0, 0.0, 0.0);
        let t0 = Instant::now();
        for (k, record) in scenes.iter().enumerate() {
            let grasps = sample_scene(
                &ckpt.params,
                &ckpt.denoiser,
                &schedule,
                &cache,
                record,
                sampler,
                args.n,
                seed.wrapping_add(k as u64),
            )?;
            let (s, e, c) = evaluate_set(&grasps, record, w, seed, false)?;
            acc = (acc.0 + s, acc.1 + e, acc.2 + c);
        }
        let n = scenes.len() as f64;
        let wall = if args.timings {
            t0.elapsed().as_millis() as u64
        } else {
            0
        };
        Ok((acc.0 / n, acc.1 / n, acc.2 / n, wall))
    };

    let mut text = String::new();
    match args.study {
        Study::Temp => {
            text.push_str("alpha,success_rate,emd\n");
            for alpha in [0.5, 0.75, 1.0] {
                let sampler = SamplerConfig {
                    temp_alpha: alpha,
                    ..SamplerConfig::default()
                };
                let (s, e, _, _) = run_cell(&sampler)?;
                text.push_str(&format!("{alpha},{s},{e}\n"));
            }
        }
        Study::Ddim => {
            text.push_str("steps,success_rate,emd,wall_time_ms\n");
            for steps in [5usize, 10, 25, 100] {
                let sampler = SamplerConfig {
                    kind: SamplerKind::Ddim,
                    steps: steps.min(schedule.n()),
                    ..SamplerConfig::default()
                };
                let (s, e, _, wall) = run_cell(&sampler)?;
                text.push_str(&format!("{steps},{s},{e},{wall}\n"));
            }
        }
        Study::Guidance => {
            text.push_str("k,m,success_rate,emd,collision_rate\n");
            let baseline = SamplerConfig::default();
            let (s, e, c, _) = run_cell(&baseline)?;
            text.push_str(&format!("-,-,{s},{e},{c}\n"));
            for k in [0usize, 1, 3] {
                for m in [1usize, 2, 3] {
                    let sampler = SamplerConfig {
                        guidance: Some(GuidanceConfig {
                            k,
                            m,
                            ..GuidanceConfig::default()
                        }),
                        ..SamplerConfig::default()
                    };
                    let (s, e, c, _) = run_cell(&sampler)?;
                    text.push_str(&format!("{k},{m},{s},{e},{c}\n"));
                }
            }
        }
    }
    std::fs::write(&args.out, &text)?;
    print!("{text}");
    Ok(())
}
