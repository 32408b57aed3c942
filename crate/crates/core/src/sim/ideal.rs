//! Servo loop with known correspondences and exact measurements.
//!
//! No detection, matching, or pixel noise: features are the exact
//! normalized projections of fixed 3D points. This isolates the control
//! law's convergence behaviour from the perception pipeline.

use nalgebra::{DVector, Vector3};

use super::SimError;
use crate::control::{control_law, stack_interaction, ControlConfig, DepthVector, FeatureVector};
use crate::geometry::{integrate_twist, Pose, Twist, MIN_DEPTH};

/// Which interaction matrix the controller inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// `L(s(t), Z(t))`, from the current features and true depths.
    Current,
    /// `L(s*, Z*)`, fixed at the goal.
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealCycle {
    pub pose: Pose,
    /// `‖s − s*‖` in normalized image coordinates.
    pub error_norm: f64,
    pub twist: Twist,
}

fn features(points: &[Vector3<f64>], pose: &Pose) -> Result<(FeatureVector, DepthVector), SimError> {
    let mut coords = Vec::with_capacity(points.len() * 2);
    let mut depths = Vec::with_capacity(points.len());
    for p in points {
        let c = pose.inverse_transform_point(p);
        if !(c.z > MIN_DEPTH) {
            return Err(SimError::InvalidConfig(format!("point {p:?} is behind the camera")));
        }
        coords.push(c.x / c.z);
        coords.push(c.y / c.z);
        depths.push(c.z);
    }
    Ok((
        FeatureVector::new(DVector::from_vec(coords))?,
        DepthVector::new(depths)?,
    ))
}

/// Runs `cycles` control steps. The record of cycle `i` holds the pose and
/// error before that cycle's twist is applied.
pub fn run_ideal_loop(
    points: &[Vector3<f64>],
    target_pose: &Pose,
    initial_pose: &Pose,
    control: &ControlConfig,
    mode: JacobianMode,
    cycles: usize,
) -> Result<Vec<IdealCycle>, SimError> {
    control.validate()?;
    let (s_star, z_star) = features(points, target_pose)?;
    let l_target = stack_interaction(&s_star, &z_star)?;
    let mut pose = *initial_pose;
    let mut out = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let (s, z) = features(points, &pose)?;
        let e = s.as_vector() - s_star.as_vector();
        let twist = match mode {
            JacobianMode::Current => control_law(&e, &stack_interaction(&s, &z)?, control)?,
            JacobianMode::Target => control_law(&e, &l_target, control)?,
        };
        out.push(IdealCycle {
            pose,
            error_norm: e.norm(),
            twist,
        });
        pose = integrate_twist(&pose, &twist, control.dt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(-0.05, -0.05, 0.0),
            Vector3::new(0.05, -0.05, 0.0),
            Vector3::new(0.05, 0.05, 0.02),
            Vector3::new(-0.05, 0.05, -0.01),
        ]
    }

    #[test]
    fn error_contracts_with_both_jacobians() {
        let target = Pose::look_at(Vector3::new(0.0, 0.0, 0.4), Vector3::zeros(), Vector3::y()).unwrap();
        let start = target.compose(&Pose::from_translation(Vector3::new(0.01, -0.01, 0.02)));
        for mode in [JacobianMode::Current, JacobianMode::Target] {
            let run = run_ideal_loop(&square(), &target, &start, &ControlConfig::default(), mode, 200).unwrap();
            assert!(run.windows(2).all(|w| w[1].error_norm < w[0].error_norm));
            assert!(run.last().unwrap().error_norm < 0.1 * run[0].error_norm);
        }
    }

    #[test]
    fn points_behind_camera_rejected() {
        let target = Pose::identity();
        assert!(run_ideal_loop(
            &square(),
            &target,
            &target,
            &ControlConfig::default(),
            JacobianMode::Current,
            1
        )
        .is_err());
    }
}
