//! Rigid transforms, the pinhole camera, and twist integration.
//!
//! Poses are camera-in-world transforms: a point `p_c` in camera coordinates
//! maps to `R * p_c + t` in world coordinates. The camera frame follows the
//! usual vision convention (x right, y down, z along the optical axis).

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depths at or below this are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

/// Below this rotation angle the SE(3) exponential switches to Taylor terms.
const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point depth {0} is not in front of the camera")]
    NonPositiveDepth(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation matrix is not orthonormal (error {0:e})")]
    NotOrthonormal(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A rigid transform in SE(3), stored as a rotation matrix and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not in SO(3) within 1e-6.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("pose"));
        }
        let err = orthonormality_error(&rotation);
        if err > 1e-6 || rotation.determinant() < 0.0 {
            return Err(GeometryError::NotOrthonormal(err));
        }
        Ok(Self {
            rotation: orthonormalize(&rotation),
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation given as an axis-angle vector (radians).
    pub fn from_rotation_vector(rotvec: Vector3<f64>) -> Self {
        Self {
            rotation: so3_exp(&rotvec),
            translation: Vector3::zeros(),
        }
    }

    /// Camera placed at `eye` with its optical axis through `target`.
    ///
    /// `up` is the world direction that should appear upwards in the image
    /// (camera -y). Returns `None` when the viewing direction is degenerate.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Option<Self> {
        let z = (target - eye).try_normalize(1e-12)?;
        let x = z.cross(&up).try_normalize(1e-12)?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Some(Self {
            rotation,
            translation: eye,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self⁻¹ ∘ other`: `other` expressed in the frame of `self`.
    pub fn relative(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a world point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.norm()
    }

    /// Geodesic rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Row-major rotation followed by translation.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_array(a: &[f64; 12]) -> Result<Self, GeometryError> {
        let rotation = Matrix3::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]);
        Self::new(rotation, Vector3::new(a[9], a[10], a[11]))
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[f64; 12]>::deserialize(d)?;
        Pose::from_array(&a).map_err(serde::de::Error::custom)
    }
}

/// `‖RᵀR − I‖` (Frobenius).
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// Gram-Schmidt on the first two columns; the third is their cross product.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y = r.column(1) - x * x.dot(&r.column(1));
    let y = y.normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues' formula.
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k2;
    }
    let theta2 = theta * theta;
    Matrix3::identity() + (theta.sin() / theta) * k + ((1.0 - theta.cos()) / theta2) * k2
}

/// SE(3) exponential of a twist `(v, ω)`.
pub fn se3_exp(xi: &Vector6<f64>) -> Pose {
    let v = Vector3::new(xi[0], xi[1], xi[2]);
    let w = Vector3::new(xi[3], xi[4], xi[5]);
    let theta = w.norm();
    let k = skew(&w);
    let k2 = k * k;
    let (rotation, coupling) = if theta < SMALL_ANGLE {
        (
            Matrix3::identity() + k + 0.5 * k2,
            Matrix3::identity() + 0.5 * k + (1.0 / 6.0) * k2,
        )
    } else {
        let theta2 = theta * theta;
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta2;
        let c = (theta - theta.sin()) / (theta2 * theta);
        (
            Matrix3::identity() + a * k + b * k2,
            Matrix3::identity() + b * k + c * k2,
        )
    };
    Pose {
        rotation,
        translation: coupling * v,
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 320×240 with a 600 px focal length.
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width)) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < f64::from(self.height)) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// True when the pixel lies in `[0, width) × [0, height)`.
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x < f64::from(self.width) && pixel.y < f64::from(self.height)
    }
}

/// Projects a camera-frame point. Returns the pixel and the depth.
///
/// The pixel may fall outside the image; callers filter with
/// [`CameraIntrinsics::contains`].
pub fn project(point: &Vector3<f64>, k: &CameraIntrinsics) -> Result<(Vector2<f64>, f64), GeometryError> {
    let z = point.z;
    if !(z > MIN_DEPTH) {
        return Err(GeometryError::NonPositiveDepth(z));
    }
    let pixel = Vector2::new(k.cx + k.fx * point.x / z, k.cy + k.fy * point.y / z);
    Ok((pixel, z))
}

pub fn pixel_to_normalized(pixel: &Vector2<f64>, k: &CameraIntrinsics) -> Vector2<f64> {
    Vector2::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy)
}

pub fn normalized_to_pixel(xy: &Vector2<f64>, k: &CameraIntrinsics) -> Vector2<f64> {
    Vector2::new(k.cx + k.fx * xy.x, k.cy + k.fy * xy.y)
}

/// Camera spatial velocity expressed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    /// m/s
    pub linear: Vector3<f64>,
    /// rad/s
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    /// Components ordered `(v_x, v_y, v_z, ω_x, ω_y, ω_z)`.
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| *v == 0.0)
    }
}

/// Moves the camera by the twist for `dt` seconds: `P ∘ exp(dt·v̂)`.
///
/// The rotation is re-orthonormalized after every step.
pub fn integrate_twist(pose: &Pose, twist: &Twist, dt: f64) -> Pose {
    let step = se3_exp(&(twist.to_vector() * dt));
    let next = pose.compose(&step);
    Pose {
        rotation: orthonormalize(&next.rotation),
        translation: next.translation,
    }
}
