//! Simulated scene, target rendering, and the closed servo loop.

mod ideal;
pub mod scene;
mod servo;
mod trace;

use thiserror::Error;

pub use ideal::{run_ideal_loop, IdealCycle, JacobianMode};
pub use scene::{viewpoint, Landmark, LandmarkKind, Scene, SceneConfig, ViewCone, DEFAULT_VIEW_DIRECTION};
pub use servo::{render_target, run_servo, run_servo_with, servo_step, LoopState, ServoRunConfig, TargetModel};
pub use trace::{CycleEvent, CycleRecord, InlierPair, RunStatus, ServoTrace, TRACE_SCHEMA};

use crate::control::ControlError;
use crate::correspondence::CorrespondenceError;
use crate::features::{DetectorError, FeatureError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("only {visible} object landmarks visible from the target pose, need {needed}")]
    TooFewVisibleLandmarks { visible: usize, needed: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene file: {0}")]
    SceneFormat(String),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Correspondence(#[from] CorrespondenceError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}
