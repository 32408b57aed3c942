use nalgebra::{DVector, Vector2};

use super::trace::{CycleEvent, CycleRecord, InlierPair, RunStatus, ServoTrace};
use super::{Scene, SimError};
use crate::control::{
    control_law, stack_interaction, ControlConfig, DepthVector, FeatureVector, InteractionMatrix, MIN_FEATURES,
};
use crate::correspondence::{
    match_nn_with, mean_correspondence_error, ransac_inliers, CorrespondenceError, MatchConfig, RansacConfig,
    TargetSelection, TrackingConfig, TrackingState,
};
use crate::features::{
    synthetic_detect, top_k, Detector, FeatureSet, SceneView, SyntheticDetector, SyntheticDetectorConfig,
};
use crate::geometry::{integrate_twist, pixel_to_normalized, CameraIntrinsics, Pose, Twist};
use crate::rng;

/// Everything one servo run needs besides the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ServoRunConfig {
    pub intrinsics: CameraIntrinsics,
    pub target_pose: Pose,
    pub initial_pose: Pose,
    pub control: ControlConfig,
    pub ransac: RansacConfig,
    pub matching: MatchConfig,
    pub detector: SyntheticDetectorConfig,
    pub tracking: TrackingConfig,
    /// Mean inlier error (pixels) that counts as converged.
    pub success_threshold: f64,
    /// Extra cycles to keep servoing once below the threshold.
    pub settle_cycles: usize,
    pub max_cycles: usize,
    /// Keypoints kept per image, by score.
    pub top_k: usize,
    /// Consecutive cycles without a usable inlier set before giving up.
    pub max_lost_cycles: usize,
}

impl Default for ServoRunConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            target_pose: Pose::identity(),
            initial_pose: Pose::identity(),
            control: ControlConfig::default(),
            ransac: RansacConfig::default(),
            matching: MatchConfig::default(),
            detector: SyntheticDetectorConfig::default(),
            tracking: TrackingConfig::default(),
            success_threshold: 2.0,
            settle_cycles: 0,
            max_cycles: 400,
            top_k: 500,
            max_lost_cycles: 3,
        }
    }
}

impl ServoRunConfig {
    /// Reseeds the detector and RANSAC streams from one run seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.detector.seed = rng::derive(seed, 1);
        self.ransac.seed = rng::derive(seed, 2);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.intrinsics
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.control.validate()?;
        self.ransac.validate()?;
        self.detector.validate()?;
        if !(self.success_threshold > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "success_threshold must be > 0, got {}",
                self.success_threshold
            )));
        }
        if self.max_cycles < 1 {
            return Err(SimError::InvalidConfig("max_cycles must be >= 1".into()));
        }
        if self.max_lost_cycles < 1 {
            return Err(SimError::InvalidConfig("max_lost_cycles must be >= 1".into()));
        }
        if !(self.tracking.activation_threshold > 0.0) {
            return Err(SimError::InvalidConfig(
                "tracking activation_threshold must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Noiseless object-only features seen from `target_pose`, with exact depths.
pub fn render_target(scene: &Scene, target_pose: &Pose, k: &CameraIntrinsics) -> Result<FeatureSet, SimError> {
    let fs = synthetic_detect(
        &scene.without_clutter(),
        target_pose,
        k,
        &SyntheticDetectorConfig::noiseless(0),
    );
    if fs.len() < MIN_FEATURES {
        return Err(SimError::TooFewVisibleLandmarks {
            visible: fs.len(),
            needed: MIN_FEATURES,
        });
    }
    Ok(fs)
}

/// Target features `s*`, their normalized coordinates, and `L* = L(s*, Z*)`.
#[derive(Debug, Clone)]
pub struct TargetModel {
    pub features: FeatureSet,
    pub normalized: Vec<Vector2<f64>>,
    pub interaction: InteractionMatrix,
}

impl TargetModel {
    pub fn new(scene: &Scene, cfg: &ServoRunConfig) -> Result<Self, SimError> {
        let features = top_k(&render_target(scene, &cfg.target_pose, &cfg.intrinsics)?, cfg.top_k);
        let normalized: Vec<_> = features
            .keypoints()
            .iter()
            .map(|kp| pixel_to_normalized(&kp.pixel, &cfg.intrinsics))
            .collect();
        let depths = DepthVector::new(features.depths().expect("render has depths").to_vec())?;
        let interaction = stack_interaction(&FeatureVector::from_points(&normalized)?, &depths)?;
        Ok(Self {
            features,
            normalized,
            interaction,
        })
    }
}

/// Mutable state carried from one cycle to the next.
#[derive(Debug, Clone)]
pub struct LoopState {
    pub cycle: usize,
    pub pose: Pose,
    pub tracking: TrackingState,
    /// Set after a tracking loss; full matching for the rest of the run.
    pub tracking_disabled: bool,
    pub prev_inlier_targets: Vec<usize>,
    pub prev_mean_error: f64,
    /// Consecutive cycles below the success threshold.
    pub below_threshold: usize,
    /// Consecutive cycles without usable inliers.
    pub lost_streak: usize,
    pub status: Option<RunStatus>,
}

impl LoopState {
    pub fn new(cfg: &ServoRunConfig) -> Self {
        Self {
            cycle: 0,
            pose: cfg.initial_pose,
            tracking: TrackingState::new(cfg.tracking.activation_threshold),
            tracking_disabled: !cfg.tracking.enabled,
            prev_inlier_targets: Vec::new(),
            prev_mean_error: f64::INFINITY,
            below_threshold: 0,
            lost_streak: 0,
            status: None,
        }
    }
}

/// Runs one detect → match → RANSAC → control → integrate cycle.
///
/// Sets `state.status` when the run should stop after this cycle.
pub fn servo_step(
    state: &mut LoopState,
    scene: &Scene,
    target: &TargetModel,
    cfg: &ServoRunConfig,
    detector: &mut dyn Detector,
) -> Result<CycleRecord, SimError> {
    let k = &cfg.intrinsics;
    let view = SceneView {
        scene,
        camera: &state.pose,
        intrinsics: k,
        frame: state.cycle as u64,
    };
    let current = top_k(&detector.detect(&view)?, cfg.top_k);

    let mut event = CycleEvent::None;
    let full = || TargetSelection {
        features: target.features.clone(),
        indices: (0..target.features.len()).collect(),
    };
    let selection = if state.tracking_disabled {
        full()
    } else {
        match state
            .tracking
            .update(&target.features, &state.prev_inlier_targets, state.prev_mean_error)
        {
            Ok((next, sel)) => {
                state.tracking = next;
                sel
            }
            Err(CorrespondenceError::TrackingLost { .. }) => {
                event = CycleEvent::TrackingLost;
                state.tracking_disabled = true;
                full()
            }
            Err(e) => return Err(e.into()),
        }
    };
    let tracking = !state.tracking_disabled && state.tracking.is_active();

    let matches = match_nn_with(&current, &selection.features, &cfg.matching);
    let ransac = RansacConfig {
        seed: rng::derive(cfg.ransac.seed, state.cycle as u64),
        ..cfg.ransac
    };
    let inliers = match ransac_inliers(&matches, &ransac) {
        Ok(r) if r.len() >= MIN_FEATURES => Some(r),
        Ok(_) | Err(CorrespondenceError::TooFewCorrespondences { .. }) | Err(CorrespondenceError::NoConsensus) => None,
        Err(e) => return Err(e.into()),
    };

    let pose = state.pose;
    let Some(inliers) = inliers else {
        if event == CycleEvent::None {
            event = CycleEvent::InsufficientFeatures;
        }
        state.lost_streak += 1;
        state.below_threshold = 0;
        state.prev_inlier_targets.clear();
        state.prev_mean_error = f64::INFINITY;
        if state.lost_streak >= cfg.max_lost_cycles {
            state.status = Some(if event == CycleEvent::TrackingLost {
                RunStatus::TrackingLost
            } else {
                RunStatus::InsufficientFeatures
            });
        }
        let record = CycleRecord {
            cycle: state.cycle,
            pose,
            twist: Twist::zero(),
            correspondences: matches.len(),
            inliers: Vec::new(),
            mean_error: None,
            tracking,
            event,
        };
        finish_cycle(state, cfg);
        return Ok(record);
    };
    state.lost_streak = 0;

    let pairs: Vec<InlierPair> = inliers
        .pairs
        .iter()
        .map(|p| {
            let full_index = selection.indices[p.target];
            InlierPair {
                target: full_index,
                current_pixel: current.keypoints()[p.current].pixel,
                target_pixel: target.features.keypoints()[full_index].pixel,
                current_landmark: current.keypoints()[p.current].landmark_id,
                target_landmark: target.features.keypoints()[full_index].landmark_id,
            }
        })
        .collect();
    let mean_error = mean_correspondence_error(&inliers)?;
    let full_targets: Vec<usize> = pairs.iter().map(|p| p.target).collect();

    let s = DVector::from_iterator(
        2 * pairs.len(),
        pairs.iter().flat_map(|p| {
            let n = pixel_to_normalized(&p.current_pixel, k);
            [n.x, n.y]
        }),
    );
    let s_star = DVector::from_iterator(
        2 * pairs.len(),
        full_targets
            .iter()
            .flat_map(|&i| [target.normalized[i].x, target.normalized[i].y]),
    );
    let l_hat = target.interaction.select(&full_targets);
    let twist = control_law(&(s - s_star), &l_hat, &cfg.control)?;

    if mean_error < cfg.success_threshold {
        if state.below_threshold >= cfg.settle_cycles {
            state.status = Some(RunStatus::Converged);
        }
        state.below_threshold += 1;
    } else {
        state.below_threshold = 0;
    }
    if state.status.is_none() {
        state.pose = integrate_twist(&state.pose, &twist, cfg.control.dt);
    }
    state.prev_inlier_targets = full_targets;
    state.prev_mean_error = mean_error;

    let record = CycleRecord {
        cycle: state.cycle,
        pose,
        twist,
        correspondences: matches.len(),
        inliers: pairs,
        mean_error: Some(mean_error),
        tracking,
        event,
    };
    finish_cycle(state, cfg);
    Ok(record)
}

fn finish_cycle(state: &mut LoopState, cfg: &ServoRunConfig) {
    state.cycle += 1;
    if state.status.is_none() && state.cycle >= cfg.max_cycles {
        state.status = Some(RunStatus::MaxCycles);
    }
}

/// Servo run with the synthetic detector configured in `cfg`.
pub fn run_servo(scene: &Scene, cfg: &ServoRunConfig) -> Result<ServoTrace, SimError> {
    let mut detector = SyntheticDetector::new(cfg.detector);
    run_servo_with(scene, cfg, &mut detector)
}

/// Iterates [`servo_step`] until convergence, feature loss, or the cycle budget.
pub fn run_servo_with(
    scene: &Scene,
    cfg: &ServoRunConfig,
    detector: &mut dyn Detector,
) -> Result<ServoTrace, SimError> {
    cfg.validate()?;
    let target = TargetModel::new(scene, cfg)?;
    let mut state = LoopState::new(cfg);
    let mut records = Vec::new();
    let status = loop {
        records.push(servo_step(&mut state, scene, &target, cfg, detector)?);
        if let Some(status) = state.status {
            break status;
        }
    };
    Ok(ServoTrace { records, status })
}
