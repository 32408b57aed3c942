use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ranked_indices, FeatureError, FeatureSet, Keypoint};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::rng;
use crate::sim::scene::normalize_descriptor;
use crate::sim::Scene;

/// Imperfections of the simulated detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticDetectorConfig {
    /// Per-component Gaussian noise added before renormalization.
    pub descriptor_noise_sigma: f64,
    /// Probability that a visible landmark is missed.
    pub detection_dropout: f64,
    /// Gaussian pixel noise, pixels.
    pub pixel_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticDetectorConfig {
    fn default() -> Self {
        Self {
            descriptor_noise_sigma: 0.02,
            detection_dropout: 0.0,
            pixel_noise_sigma: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticDetectorConfig {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            descriptor_noise_sigma: 0.0,
            detection_dropout: 0.0,
            pixel_noise_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.descriptor_noise_sigma >= 0.0 && self.pixel_noise_sigma >= 0.0) {
            return Err(FeatureError::InvalidConfig("noise sigmas must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.detection_dropout) {
            return Err(FeatureError::InvalidConfig(format!(
                "detection_dropout {} outside [0, 1]",
                self.detection_dropout
            )));
        }
        Ok(())
    }
}

/// Score of a landmark: a hash of its id and the scene seed.
pub(crate) fn landmark_score(scene_seed: u64, id: u32) -> f64 {
    rng::unit_from_hash(rng::derive(scene_seed ^ 0x5C0_4E5, u64::from(id)))
}

/// Projects every visible landmark and perturbs the result.
///
/// Landmarks are visited in scene order; each one draws dropout, then pixel
/// noise, then descriptor noise from a single stream seeded by `cfg.seed`.
/// Keypoints pushed out of the image by noise are dropped. The output is
/// ranked by descending score.
pub fn synthetic_detect(
    scene: &Scene,
    camera: &Pose,
    k: &CameraIntrinsics,
    cfg: &SyntheticDetectorConfig,
) -> FeatureSet {
    let mut rng = rng::rng(cfg.seed);
    let pixel_noise = Normal::new(0.0, cfg.pixel_noise_sigma).expect("sigma validated");
    let desc_noise = Normal::new(0.0, cfg.descriptor_noise_sigma).expect("sigma validated");
    let mut keypoints = Vec::new();
    let mut depths = Vec::new();
    for (i, lm) in scene.landmarks().iter().enumerate() {
        let Some((pixel, depth)) = scene.observe(i, camera, k) else {
            continue;
        };
        if cfg.detection_dropout > 0.0 && rng.random::<f64>() < cfg.detection_dropout {
            continue;
        }
        let pixel = if cfg.pixel_noise_sigma > 0.0 {
            pixel + Vector2::new(pixel_noise.sample(&mut rng), pixel_noise.sample(&mut rng))
        } else {
            pixel
        };
        let canonical = scene.descriptor(i);
        let descriptor = if cfg.descriptor_noise_sigma > 0.0 {
            let raw: Vec<f64> = canonical
                .iter()
                .map(|c| f64::from(*c) + desc_noise.sample(&mut rng))
                .collect();
            normalize_descriptor(&raw)
        } else {
            canonical.to_vec()
        };
        if !k.contains(&pixel) {
            continue;
        }
        keypoints.push(Keypoint {
            pixel,
            descriptor,
            score: landmark_score(scene.seed(), lm.id),
            landmark_id: Some(lm.id),
        });
        depths.push(depth);
    }
    let fs =
        FeatureSet::new(keypoints, k.width, k.height, Some(depths)).expect("synthetic keypoints satisfy invariants");
    let order = ranked_indices(&fs);
    fs.subset(&order)
}
