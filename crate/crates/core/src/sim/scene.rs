//! Landmark scenes: a textured object plus optional clutter.

use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{project, CameraIntrinsics, Pose, MIN_DEPTH};
use crate::rng;

pub const SCENE_SCHEMA: &str = "featservo.scene/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    /// Part of the object; appears in target renders.
    Object,
    /// Distractor; only ever seen by the live camera.
    Clutter,
}

/// Restricts visibility to viewers within `max_incidence_deg` of `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewCone {
    pub normal: [f64; 3],
    pub max_incidence_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub id: u32,
    /// World frame, meters.
    pub position: [f64; 3],
    pub kind: LandmarkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_cone: Option<ViewCone>,
}

impl Landmark {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    schema: String,
    seed: u64,
    descriptor_dim: usize,
    landmarks: Vec<Landmark>,
}

/// A set of landmarks with one canonical descriptor each.
///
/// Descriptors are not stored in scene files; they are regenerated from
/// the scene seed and the landmark id.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    seed: u64,
    descriptor_dim: usize,
    landmarks: Vec<Landmark>,
    descriptors: Vec<Vec<f32>>,
}

impl Scene {
    pub fn new(seed: u64, descriptor_dim: usize, landmarks: Vec<Landmark>) -> Result<Self, SimError> {
        if descriptor_dim == 0 {
            return Err(SimError::InvalidScene("descriptor_dim must be positive".into()));
        }
        let mut ids: Vec<u32> = landmarks.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(SimError::InvalidScene(format!("duplicate landmark id {}", w[0])));
        }
        for l in &landmarks {
            if l.position.iter().any(|v| !v.is_finite()) {
                return Err(SimError::InvalidScene(format!(
                    "landmark {} has a non-finite position",
                    l.id
                )));
            }
            if let Some(c) = &l.view_cone {
                if Vector3::from(c.normal).norm() < 1e-12 {
                    return Err(SimError::InvalidScene(format!(
                        "landmark {} has a zero view-cone normal",
                        l.id
                    )));
                }
            }
        }
        let descriptors = landmarks
            .iter()
            .map(|l| canonical_descriptor(seed, l.id, descriptor_dim))
            .collect();
        Ok(Self {
            seed,
            descriptor_dim,
            landmarks,
            descriptors,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn descriptor(&self, index: usize) -> &[f32] {
        &self.descriptors[index]
    }

    pub fn object_count(&self) -> usize {
        self.landmarks.iter().filter(|l| l.kind == LandmarkKind::Object).count()
    }

    pub fn clutter_count(&self) -> usize {
        self.landmarks.len() - self.object_count()
    }

    /// Scene without its clutter landmarks.
    pub fn without_clutter(&self) -> Scene {
        let keep: Vec<usize> = (0..self.landmarks.len())
            .filter(|&i| self.landmarks[i].kind == LandmarkKind::Object)
            .collect();
        Scene {
            seed: self.seed,
            descriptor_dim: self.descriptor_dim,
            landmarks: keep.iter().map(|&i| self.landmarks[i].clone()).collect(),
            descriptors: keep.iter().map(|&i| self.descriptors[i].clone()).collect(),
        }
    }

    /// Pixel and depth of landmark `index` seen from `camera`, if visible.
    ///
    /// Visible means in front of the camera, inside the image, and inside the
    /// landmark's view cone. There is no occlusion test.
    pub fn observe(&self, index: usize, camera: &Pose, k: &CameraIntrinsics) -> Option<(Vector2<f64>, f64)> {
        let lm = &self.landmarks[index];
        let world = lm.position();
        if let Some(cone) = &lm.view_cone {
            let to_camera = camera.translation() - world;
            let n = Vector3::from(cone.normal).normalize();
            let cos = n.dot(&to_camera) / to_camera.norm();
            if !(cos >= cone.max_incidence_deg.to_radians().cos()) {
                return None;
            }
        }
        let local = camera.inverse_transform_point(&world);
        if !(local.z > MIN_DEPTH) {
            return None;
        }
        let (pixel, depth) = project(&local, k).ok()?;
        k.contains(&pixel).then_some((pixel, depth))
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            schema: SCENE_SCHEMA.to_string(),
            seed: self.seed,
            descriptor_dim: self.descriptor_dim,
            landmarks: self.landmarks.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| SimError::SceneFormat(e.to_string()))?;
        if file.schema != SCENE_SCHEMA {
            return Err(SimError::SceneFormat(format!(
                "unsupported schema {:?}, expected {SCENE_SCHEMA:?}",
                file.schema
            )));
        }
        Self::new(file.seed, file.descriptor_dim, file.landmarks)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        fs::write(path, self.to_json()).map_err(|e| SimError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Unit-norm Gaussian direction, fixed by `(scene seed, landmark id)`.
pub fn canonical_descriptor(seed: u64, id: u32, dim: usize) -> Vec<f32> {
    let mut rng = rng::rng(rng::derive(seed, u64::from(id)));
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize_descriptor(&raw)
}

pub(crate) fn normalize_descriptor(raw: &[f64]) -> Vec<f32> {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| (v / norm) as f32).collect()
}

/// Parameters for the default box-plus-clutter scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub seed: u64,
    pub descriptor_dim: usize,
    pub object_landmarks: usize,
    pub clutter_landmarks: usize,
    /// Box half extents in meters; the box is centered at the world origin.
    pub box_half_extent: [f64; 3],
    /// Textured faces: 2 uses +z and -y, 3 adds +x.
    pub faces: usize,
    /// Clutter is sampled uniformly in a cube of this half size around the box.
    pub clutter_extent: f64,
    pub max_incidence_deg: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            descriptor_dim: 256,
            object_landmarks: 100,
            clutter_landmarks: 100,
            box_half_extent: [0.04, 0.04, 0.03],
            faces: 2,
            clutter_extent: 0.12,
            max_incidence_deg: 80.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(2..=3).contains(&self.faces) {
            return Err(SimError::InvalidScene(format!(
                "faces must be 2 or 3, got {}",
                self.faces
            )));
        }
        if self.descriptor_dim == 0 {
            return Err(SimError::InvalidScene("descriptor_dim must be positive".into()));
        }
        if self.box_half_extent.iter().any(|h| !(*h > 0.0)) {
            return Err(SimError::InvalidScene("box_half_extent must be positive".into()));
        }
        let max_half = self.box_half_extent.iter().cloned().fold(0.0, f64::max);
        if self.clutter_landmarks > 0 && !(self.clutter_extent > max_half) {
            return Err(SimError::InvalidScene("clutter_extent must exceed the box size".into()));
        }
        if !(self.max_incidence_deg > 0.0 && self.max_incidence_deg <= 90.0) {
            return Err(SimError::InvalidScene("max_incidence_deg must be in (0, 90]".into()));
        }
        Ok(())
    }

    /// Samples landmarks on the box faces and clutter around it.
    pub fn generate(&self) -> Result<Scene, SimError> {
        self.validate()?;
        let mut rng = rng::rng(rng::derive(self.seed, 0x5CE4E));
        let h = self.box_half_extent;
        // (normal axis, sign)
        let faces: &[(usize, f64)] = &[(2, 1.0), (1, -1.0), (0, 1.0)][..self.faces];
        let mut landmarks = Vec::with_capacity(self.object_landmarks + self.clutter_landmarks);
        for i in 0..self.object_landmarks {
            let (axis, sign) = faces[i % faces.len()];
            let mut p = [0.0; 3];
            for (a, v) in p.iter_mut().enumerate() {
                *v = if a == axis {
                    sign * h[a]
                } else {
                    rng.random_range(-0.9..0.9) * h[a]
                };
            }
            let mut normal = [0.0; 3];
            normal[axis] = sign;
            landmarks.push(Landmark {
                id: i as u32,
                position: p,
                kind: LandmarkKind::Object,
                view_cone: Some(ViewCone {
                    normal,
                    max_incidence_deg: self.max_incidence_deg,
                }),
            });
        }
        let margin = 0.005;
        let mut placed = 0;
        while placed < self.clutter_landmarks {
            let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-self.clutter_extent..self.clutter_extent));
            if (0..3).all(|a| p[a].abs() < h[a] + margin) {
                continue;
            }
            landmarks.push(Landmark {
                id: (self.object_landmarks + placed) as u32,
                position: p,
                kind: LandmarkKind::Clutter,
                view_cone: None,
            });
            placed += 1;
        }
        Scene::new(self.seed, self.descriptor_dim, landmarks)
    }
}

/// Viewing direction of the default goal pose, from the object toward the camera.
pub const DEFAULT_VIEW_DIRECTION: [f64; 3] = [0.35, -0.75, 0.55];

/// Camera looking at the box center from `direction` at `distance`, world z up.
pub fn viewpoint(direction: [f64; 3], distance: f64) -> Option<Pose> {
    let d = Vector3::from(direction).try_normalize(1e-12)?;
    Pose::look_at(d * distance, Vector3::zeros(), Vector3::z())
}
