//! Feature-based image-based visual servoing (IBVS) in simulation.
//!
//! The crate closes the classical IBVS loop around keypoint features:
//!
//! 1. detect keypoints with descriptors in the current view ([`features`]),
//! 2. match them to target keypoints and reject outliers with RANSAC
//!    ([`correspondence`]),
//! 3. command a camera twist `v = −λ L̂⁺ e` from the inlier feature error
//!    ([`control`]),
//! 4. move the simulated camera and repeat ([`sim`]).
//!
//! Target features come from a noiseless render of the goal view, which also
//! provides the exact depths used for the interaction matrix at the goal.
//! [`experiment`] holds the accuracy and success-ratio suites and the
//! configuration file format used by the `featservo` command-line tool.
//!
//! ```
//! use featservo::geometry::Pose;
//! use featservo::sim::{run_servo, viewpoint, RunStatus, SceneConfig, ServoRunConfig, DEFAULT_VIEW_DIRECTION};
//! use featservo::nalgebra::Vector3;
//!
//! let scene = SceneConfig::default().generate().unwrap();
//! let target = viewpoint(DEFAULT_VIEW_DIRECTION, 0.3).unwrap();
//! let start = target.compose(&Pose::from_translation(Vector3::new(0.01, 0.0, 0.0)));
//! let cfg = ServoRunConfig { target_pose: target, initial_pose: start, ..Default::default() };
//! let trace = run_servo(&scene, &cfg).unwrap();
//! assert_eq!(trace.status, RunStatus::Converged);
//! ```

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod correspondence;
pub mod experiment;
pub mod features;
pub mod geometry;
pub mod rng;
pub mod sim;

pub use nalgebra;
