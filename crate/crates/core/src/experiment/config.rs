//! The experiment configuration file (TOML).
//!
//! Every section is optional and falls back to defaults; unknown keys are
//! rejected. See `book/src/experiments.md` for the full schema.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::control::ControlConfig;
use crate::correspondence::{MatchConfig, RansacConfig, TrackingConfig};
use crate::features::SyntheticDetectorConfig;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::sim::{viewpoint, Scene, SceneConfig, ServoRunConfig, DEFAULT_VIEW_DIRECTION};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// A camera pose in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseSpec {
    /// Row-major rotation then translation.
    Matrix { matrix: [f64; 12] },
    /// Looking at the object center from `view_direction`, world z up.
    View { view_direction: [f64; 3], distance: f64 },
}

impl PoseSpec {
    pub fn resolve(&self) -> Result<Pose, ExperimentError> {
        match self {
            PoseSpec::Matrix { matrix } => Pose::from_array(matrix).map_err(|e| ExperimentError::Config(e.to_string())),
            PoseSpec::View {
                view_direction,
                distance,
            } => {
                if !(*distance > 0.0) {
                    return Err(ExperimentError::Config(format!("distance must be > 0, got {distance}")));
                }
                viewpoint(*view_direction, *distance)
                    .ok_or_else(|| ExperimentError::Config(format!("degenerate view direction {view_direction:?}")))
            }
        }
    }
}

/// A displacement of the camera expressed in the goal camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetSpec {
    pub translation_cm: [f64; 3],
    pub rotation_deg: [f64; 3],
}

impl OffsetSpec {
    /// `target ∘ (R, t)`: the camera center moves by exactly `t`.
    pub fn apply(&self, target: &Pose) -> Pose {
        let t = Vector3::from(self.translation_cm) / 100.0;
        let r = Vector3::from(self.rotation_deg).map(f64::to_radians);
        target.compose(&Pose::from_translation(t).compose(&Pose::from_rotation_vector(r)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Offset(OffsetSpec),
    Pose(PoseSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub target: PoseSpec,
    pub initial: StartSpec,
    pub success_threshold: f64,
    pub settle_cycles: usize,
    pub max_cycles: usize,
    pub top_k: usize,
    pub max_lost_cycles: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        let d = ServoRunConfig::default();
        Self {
            target: PoseSpec::View {
                view_direction: DEFAULT_VIEW_DIRECTION,
                distance: 0.3,
            },
            initial: StartSpec::Offset(OffsetSpec {
                translation_cm: [1.5, -1.0, 1.0],
                rotation_deg: [3.0, -4.0, 2.0],
            }),
            success_threshold: d.success_threshold,
            settle_cycles: d.settle_cycles,
            max_cycles: d.max_cycles,
            top_k: d.top_k,
            max_lost_cycles: d.max_lost_cycles,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccuracySection {
    pub goals: Vec<PoseSpec>,
    pub starts: Vec<StartSpec>,
    /// One scene per seed; other scene parameters come from `[scene]`.
    pub scene_seeds: Vec<u64>,
    pub settle_cycles: usize,
}

impl Default for AccuracySection {
    fn default() -> Self {
        let offset = |t: [f64; 3], r: [f64; 3]| {
            StartSpec::Offset(OffsetSpec {
                translation_cm: t,
                rotation_deg: r,
            })
        };
        Self {
            goals: vec![
                PoseSpec::View {
                    view_direction: DEFAULT_VIEW_DIRECTION,
                    distance: 0.3,
                },
                PoseSpec::View {
                    view_direction: [-0.3, -0.8, 0.6],
                    distance: 0.28,
                },
            ],
            starts: vec![
                offset([3.0, -2.0, 2.0], [4.0, -6.0, 3.0]),
                offset([-4.0, 1.0, -2.0], [-5.0, 4.0, -2.0]),
                offset([1.0, 3.0, 3.0], [3.0, 5.0, -6.0]),
            ],
            scene_seeds: vec![1, 2, 3],
            settle_cycles: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchEntry {
    /// Camera travel distance band `[low, high]` in cm.
    pub band_cm: [f64; 2],
    /// Per-axis bounds on the sampled rotation vector, degrees.
    pub rotation_bounds_deg: [f64; 3],
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSection {
    pub batches: Vec<BatchEntry>,
    /// Clutter modes to run; each batch is run once per mode.
    pub clutter: Vec<bool>,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self {
            batches: (0..6)
                .map(|i| BatchEntry {
                    band_cm: [i as f64, (i + 1) as f64],
                    rotation_bounds_deg: [8.0, 10.0, 8.0],
                    trials: 8,
                })
                .collect(),
            clutter: vec![true, false],
        }
    }
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Optional scene file; replaces the generated `[scene]` for `run`.
    pub scene_file: Option<PathBuf>,
    pub camera: CameraIntrinsics,
    pub scene: SceneConfig,
    pub detector: SyntheticDetectorConfig,
    pub control: ControlConfig,
    pub ransac: RansacConfig,
    pub matching: MatchConfig,
    pub tracking: TrackingConfig,
    pub run: RunSection,
    pub accuracy: AccuracySection,
    pub batch: BatchSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            scene_file: None,
            camera: CameraIntrinsics::default(),
            scene: SceneConfig::default(),
            detector: SyntheticDetectorConfig::default(),
            control: ControlConfig::default(),
            ransac: RansacConfig::default(),
            matching: MatchConfig::default(),
            tracking: TrackingConfig::default(),
            run: RunSection::default(),
            accuracy: AccuracySection::default(),
            batch: BatchSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative scene paths are relative to the config file.
        if let (Some(file), Some(dir)) = (&cfg.scene_file, path.parent()) {
            if file.is_relative() {
                cfg.scene_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let cfg_err = |m: String| Err(ExperimentError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return cfg_err(format!(
                "schema_version {} unsupported, expected {CONFIG_SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        self.scene
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let target = self.run.target.resolve()?;
        let initial = self.resolve_start(&self.run.initial, &target)?;
        self.servo_config(target, initial, self.run.settle_cycles, self.run.seed)
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        for g in &self.accuracy.goals {
            g.resolve()?;
        }
        for s in &self.accuracy.starts {
            self.resolve_start(s, &target)?;
        }
        let b = &self.batch;
        let mut prev_high = f64::NEG_INFINITY;
        for (i, entry) in b.batches.iter().enumerate() {
            let [lo, hi] = entry.band_cm;
            if entry.trials < 1 {
                return cfg_err(format!("batch {}: trials must be >= 1", i + 1));
            }
            if !(lo >= 0.0 && hi > lo) {
                return cfg_err(format!(
                    "batch {}: band [{lo}, {hi}] must satisfy 0 <= low < high",
                    i + 1
                ));
            }
            if lo < prev_high {
                return cfg_err(format!("batch {}: bands must be increasing and non-overlapping", i + 1));
            }
            if entry.rotation_bounds_deg.iter().any(|r| !(*r >= 0.0 && *r < 180.0)) {
                return cfg_err(format!("batch {}: rotation bounds must be in [0, 180)", i + 1));
            }
            prev_high = hi;
        }
        Ok(())
    }

    pub fn resolve_start(&self, start: &StartSpec, target: &Pose) -> Result<Pose, ExperimentError> {
        match start {
            StartSpec::Offset(o) => Ok(o.apply(target)),
            StartSpec::Pose(p) => p.resolve(),
        }
    }

    /// Servo configuration for one run; `seed` drives detector and RANSAC noise.
    pub fn servo_config(&self, target: Pose, initial: Pose, settle_cycles: usize, seed: u64) -> ServoRunConfig {
        ServoRunConfig {
            intrinsics: self.camera,
            target_pose: target,
            initial_pose: initial,
            control: self.control,
            ransac: self.ransac,
            matching: self.matching,
            detector: self.detector,
            tracking: self.tracking,
            success_threshold: self.run.success_threshold,
            settle_cycles,
            max_cycles: self.run.max_cycles,
            top_k: self.run.top_k,
            max_lost_cycles: self.run.max_lost_cycles,
        }
        .with_seed(seed)
    }

    /// The scene for single runs: the scene file when given, else generated.
    pub fn run_scene(&self) -> Result<Scene, ExperimentError> {
        match &self.scene_file {
            Some(path) => Scene::load(path).map_err(|e| ExperimentError::Config(e.to_string())),
            None => self
                .scene
                .generate()
                .map_err(|e| ExperimentError::Config(e.to_string())),
        }
    }

    /// Overrides the run seed (detector and RANSAC noise, batch sampling).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }
}
