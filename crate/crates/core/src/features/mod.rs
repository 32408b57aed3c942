//! Keypoints, feature sets, and the detector abstraction.
//!
//! A detector turns a view into keypoints with unit-norm descriptors and
//! confidence scores. Two implementations ship here: [`SyntheticDetector`],
//! which projects scene landmarks and perturbs them, and [`FileDetector`],
//! which reads feature files written by an external detector.

mod io;
mod synthetic;

use std::cmp::Ordering;
use std::path::PathBuf;

use nalgebra::Vector2;
use thiserror::Error;

pub use io::{read_features, write_features, FeatureIoError, FEATURES_VERSION};
pub use synthetic::{synthetic_detect, SyntheticDetectorConfig};

use crate::geometry::{CameraIntrinsics, Pose};
use crate::sim::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("keypoint {index}: {reason}")]
    InvalidKeypoint { index: usize, reason: String },
    #[error("{0} depths for {1} keypoints")]
    DepthCount(usize, usize),
    #[error("depth {0} of keypoint {1} is not positive")]
    NonPositiveDepth(f64, usize),
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error(transparent)]
    Io(#[from] FeatureIoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub pixel: Vector2<f64>,
    /// Unit norm.
    pub descriptor: Vec<f32>,
    /// Confidence in `[0, 1]`.
    pub score: f64,
    /// Simulation ground truth. Never consulted by matching.
    pub landmark_id: Option<u32>,
}

/// Keypoints detected in one image, with optional per-keypoint depths.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    keypoints: Vec<Keypoint>,
    width: u32,
    height: u32,
    depths: Option<Vec<f64>>,
}

const NORM_TOLERANCE: f64 = 1e-6;

impl FeatureSet {
    pub fn new(
        keypoints: Vec<Keypoint>,
        width: u32,
        height: u32,
        depths: Option<Vec<f64>>,
    ) -> Result<Self, FeatureError> {
        let dim = keypoints.first().map(|k| k.descriptor.len());
        for (index, kp) in keypoints.iter().enumerate() {
            let bad = |reason: String| FeatureError::InvalidKeypoint { index, reason };
            let (u, v) = (kp.pixel.x, kp.pixel.y);
            if !(u >= 0.0 && v >= 0.0 && u < f64::from(width) && v < f64::from(height)) {
                return Err(bad(format!("pixel ({u}, {v}) outside {width}x{height}")));
            }
            if !(0.0..=1.0).contains(&kp.score) {
                return Err(bad(format!("score {} outside [0, 1]", kp.score)));
            }
            if Some(kp.descriptor.len()) != dim {
                return Err(bad(format!(
                    "descriptor length {} differs from {}",
                    kp.descriptor.len(),
                    dim.unwrap_or(0)
                )));
            }
            let norm = kp.descriptor.iter().map(|c| f64::from(*c).powi(2)).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
                return Err(bad(format!("descriptor norm {norm} is not 1")));
            }
        }
        if let Some(d) = &depths {
            if d.len() != keypoints.len() {
                return Err(FeatureError::DepthCount(d.len(), keypoints.len()));
            }
            if let Some(i) = d.iter().position(|z| !(*z > 0.0)) {
                return Err(FeatureError::NonPositiveDepth(d[i], i));
            }
        }
        Ok(Self {
            keypoints,
            width,
            height,
            depths,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            keypoints: Vec::new(),
            width,
            height,
            depths: None,
        }
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn depths(&self) -> Option<&[f64]> {
        self.depths.as_deref()
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn descriptor_dim(&self) -> Option<usize> {
        self.keypoints.first().map(|k| k.descriptor.len())
    }

    /// Keeps the listed keypoints (and depths) in the given order.
    pub fn subset(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            keypoints: indices.iter().map(|&i| self.keypoints[i].clone()).collect(),
            width: self.width,
            height: self.height,
            depths: self.depths.as_ref().map(|d| indices.iter().map(|&i| d[i]).collect()),
        }
    }
}

/// Descending score, then ascending pixel `(u, v)`.
fn rank_order(a: &Keypoint, b: &Keypoint) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.pixel.x.total_cmp(&b.pixel.x))
        .then(a.pixel.y.total_cmp(&b.pixel.y))
}

pub(crate) fn ranked_indices(fs: &FeatureSet) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fs.len()).collect();
    idx.sort_by(|&a, &b| rank_order(&fs.keypoints[a], &fs.keypoints[b]));
    idx
}

/// The `k` highest-scoring keypoints, ranked.
pub fn top_k(fs: &FeatureSet, k: usize) -> FeatureSet {
    let mut idx = ranked_indices(fs);
    idx.truncate(k);
    fs.subset(&idx)
}

/// What a detector gets to look at.
///
/// For the synthetic detector this is the scene and the true camera pose;
/// `frame` numbers successive images so per-image noise differs.
#[derive(Debug, Clone, Copy)]
pub struct SceneView<'a> {
    pub scene: &'a Scene,
    pub camera: &'a Pose,
    pub intrinsics: &'a CameraIntrinsics,
    pub frame: u64,
}

/// A keypoint detector: `image → {p, f, c}`, ranked by descending score.
pub trait Detector {
    fn detect(&mut self, view: &SceneView<'_>) -> Result<FeatureSet, DetectorError>;
}

#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    pub config: SyntheticDetectorConfig,
}

impl SyntheticDetector {
    pub fn new(config: SyntheticDetectorConfig) -> Self {
        Self { config }
    }
}

impl Detector for SyntheticDetector {
    fn detect(&mut self, view: &SceneView<'_>) -> Result<FeatureSet, DetectorError> {
        let cfg = SyntheticDetectorConfig {
            seed: crate::rng::derive(self.config.seed, view.frame),
            ..self.config
        };
        Ok(synthetic_detect(view.scene, view.camera, view.intrinsics, &cfg))
    }
}

/// Reads `frame_NNNNNN.feat` files produced by an external detector.
#[derive(Debug, Clone)]
pub struct FileDetector {
    dir: PathBuf,
}

impl FileDetector {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn frame_path(&self, frame: u64) -> PathBuf {
        self.dir.join(format!("frame_{frame:06}.feat"))
    }
}

impl Detector for FileDetector {
    fn detect(&mut self, view: &SceneView<'_>) -> Result<FeatureSet, DetectorError> {
        let path = self.frame_path(view.frame);
        let file = std::fs::File::open(&path)
            .map_err(|e| DetectorError::DetectorUnavailable(format!("{}: {e}", path.display())))?;
        let fs = read_features(std::io::BufReader::new(file))?;
        let order = ranked_indices(&fs);
        Ok(fs.subset(&order))
    }
}
