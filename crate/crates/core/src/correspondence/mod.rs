//! Matching current features to target features and rejecting outliers.
//!
//! Each cycle runs mutual nearest-neighbour matching on descriptors, then
//! RANSAC with a planar homography to keep a geometrically consistent
//! subset. Near the target, [`TrackingState`] restricts matching to the
//! previous cycle's inlier targets.

mod homography;
mod matching;
mod ransac;
mod tracking;

use thiserror::Error;

pub use homography::{fit_homography, GeometricModel, Homography};
pub use matching::{match_nn, match_nn_with, Correspondence, CorrespondenceSet, MatchConfig};
pub use ransac::{ransac_inliers, ransac_with_model, required_iterations, InlierSet, RansacConfig};
pub use tracking::{tracking_update, TargetSelection, TrackingConfig, TrackingState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrespondenceError {
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("no non-degenerate sample produced a consensus")]
    NoConsensus,
    #[error("tracking lost: {surviving} correspondences survive")]
    TrackingLost { surviving: usize },
    #[error("empty correspondence set")]
    EmptySet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Mean pixel distance between current and target pixels of the inliers.
pub fn mean_correspondence_error<M>(r: &InlierSet<M>) -> Result<f64, CorrespondenceError> {
    mean_pixel_error(&r.current_pixels, &r.target_pixels)
}

pub fn mean_pixel_error(
    current: &[nalgebra::Vector2<f64>],
    target: &[nalgebra::Vector2<f64>],
) -> Result<f64, CorrespondenceError> {
    if current.is_empty() {
        return Err(CorrespondenceError::EmptySet);
    }
    let total: f64 = current.iter().zip(target).map(|(c, t)| (c - t).norm()).sum();
    Ok(total / current.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector2};
    use proptest::prelude::*;

    fn inliers(cur: Vec<Vector2<f64>>, tgt: Vec<Vector2<f64>>) -> InlierSet {
        let c = CorrespondenceSet::from_pixels(cur.clone(), tgt.clone());
        InlierSet {
            indices: (0..cur.len()).collect(),
            pairs: c.pairs,
            residuals: vec![0.0; cur.len()],
            current_pixels: cur,
            target_pixels: tgt,
            model: Homography::new(Matrix3::identity()).unwrap(),
            iterations: 0,
        }
    }

    #[test]
    fn mean_error_examples() {
        let p = vec![Vector2::new(1.0, 2.0), Vector2::new(5.0, 5.0)];
        assert_eq!(mean_correspondence_error(&inliers(p.clone(), p.clone())).unwrap(), 0.0);
        let q = vec![Vector2::new(2.0, 2.0), Vector2::new(5.0, 8.0)];
        assert_eq!(mean_correspondence_error(&inliers(p, q)).unwrap(), 2.0);
        assert_eq!(
            mean_correspondence_error(&inliers(vec![], vec![])),
            Err(CorrespondenceError::EmptySet)
        );
    }

    proptest! {
        #[test]
        fn mean_error_matches_recomputation(pts in prop::collection::vec((0.0f64..320.0, 0.0f64..240.0, 0.0f64..320.0, 0.0f64..240.0), 1..50)) {
            let cur: Vec<_> = pts.iter().map(|p| Vector2::new(p.0, p.1)).collect();
            let tgt: Vec<_> = pts.iter().map(|p| Vector2::new(p.2, p.3)).collect();
            let mut brute = 0.0;
            for p in &pts {
                brute += ((p.0 - p.2).powi(2) + (p.1 - p.3).powi(2)).sqrt();
            }
            brute /= pts.len() as f64;
            let got = mean_correspondence_error(&inliers(cur, tgt)).unwrap();
            prop_assert!((got - brute).abs() <= 1e-12 * brute.max(1.0));
        }
    }
}
