//! Run configuration: strict (closed) JSON schema with defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::SamplerConfig;
use crate::model::DenoiserConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level run configuration. Unknown fields are rejected everywhere;
/// omitted optional fields take the defaults below (100 diffusion steps,
/// learning rate 3e-4, DDPM at temperature 0.75).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub denoiser: DenoiserConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Dataset root; `GDN_DATA_DIR` and the `--data` flag override it.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Gripper sphere-model file; the built-in parallel gripper otherwise.
    #[serde(default)]
    pub gripper_model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            data: DataConfig::default(),
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserConfig::default(),
            sampler: SamplerConfig::default(),
            training: TrainingConfig::default(),
            data_dir: None,
            gripper_model: None,
        }
    }
}

/// Range `[lo, hi]` for one sampled object dimension, meters.
pub type DimRange = [f64; 2];

/// Object family sampled per scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectSpec {
    Box {
        width: DimRange,
        depth: DimRange,
        height: DimRange,
    },
    Cylinder {
        radius: DimRange,
        height: DimRange,
    },
}

/// Dataset synthesis parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub n_scenes: usize,
    pub grasps_per_scene: usize,
    pub points_per_cloud: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub fov_deg: f64,
    /// Camera distance from the scene origin, meters.
    pub camera_radius: f64,
    /// Camera elevation range above the horizon, degrees.
    pub camera_elevation_deg: DimRange,
    pub objects: Vec<ObjectSpec>,
    /// Random yaw applied to each object.
    pub random_yaw: bool,
    pub gripper_opening: f64,
    pub cloud_sphere_radius: f64,
    /// Restrict side-grasp closing azimuths to this many world-frame modes.
    pub azimuth_modes: Option<u32>,
    /// Fraction of grasp candidates perturbed off the antipodal solution.
    pub perturbed_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_scenes: 50,
            grasps_per_scene: 64,
            points_per_cloud: 256,
            image_width: 64,
            image_height: 64,
            fov_deg: 18.0,
            camera_radius: 0.5,
            camera_elevation_deg: [25.0, 65.0],
            objects: vec![ObjectSpec::Cylinder {
                radius: [0.022, 0.032],
                height: [0.06, 0.10],
            }],
            random_yaw: true,
            gripper_opening: 0.08,
            cloud_sphere_radius: crate::guidance::DEFAULT_CLOUD_SPHERE_RADIUS,
            azimuth_modes: None,
            perturbed_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub n_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { n_steps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_scenes: usize,
    pub batch_grasps_per_scene: usize,
    pub steps: u64,
    pub checkpoint_every: u64,
    /// Wall-clock budget; training stops early when exceeded.
    pub max_seconds: Option<u64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 3e-4,
            batch_scenes: 8,
            batch_grasps_per_scene: 16,
            steps: 4000,
            checkpoint_every: 1000,
            max_seconds: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.schedule.n_steps < 2 {
            return Err(Error::Config("schedule.n_steps must be >= 2".into()));
        }
        self.denoiser.validate()?;
        self.sampler.validate(self.schedule.n_steps)?;
        let t = &self.training;
        if !(t.learning_rate > 0.0) || t.batch_scenes == 0 || t.batch_grasps_per_scene == 0 {
            return Err(Error::Config(
                "training: learning_rate > 0 and nonzero batch shape required".into(),
            ));
        }
        let d = &self.data;
        if d.n_scenes == 0
            || d.grasps_per_scene == 0
            || d.points_per_cloud == 0
            || d.objects.is_empty()
            || !(d.camera_radius > 0.0)
            || !(d.fov_deg > 0.0 && d.fov_deg < 180.0)
            || !(d.cloud_sphere_radius > 0.0)
            || !(0.0..=1.0).contains(&d.perturbed_fraction)
        {
            return Err(Error::Config("data: invalid synthesis parameters".into()));
        }
        for spec in &d.objects {
            let ranges: Vec<DimRange> = match spec {
                ObjectSpec::Box { width, depth, height } => vec![*width, *depth, *height],
                ObjectSpec::Cylinder { radius, height } => vec![*radius, *height],
            };
            for [lo, hi] in ranges {
                if !(lo > 0.0) || hi < lo {
                    return Err(Error::Config(format!(
                        "object dimension range [{lo}, {hi}] must satisfy 0 < lo <= hi"
                    )));
                }
            }
        }
        if let Some(p) = &self.gripper_model {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "gripper_model path {p:?} is not resolvable"
                )));
            }
        }
        Ok(())
    }
}

/// Canonical serialization: pretty JSON with struct-order fields plus a
/// trailing newline, so save-load-save is byte-stable.
pub fn config_to_string(cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    super::atomic_write(path, config_to_string(cfg).as_bytes())
}

/// Loads and validates a config; schema violations report the field path.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
