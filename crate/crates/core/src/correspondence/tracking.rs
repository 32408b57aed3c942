use serde::{Deserialize, Serialize};

use super::CorrespondenceError;
use crate::control::MIN_FEATURES;
use crate::features::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub enabled: bool,
    /// Mean correspondence error (pixels) below which tracking starts.
    pub activation_threshold: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            activation_threshold: 10.0,
        }
    }
}

/// Near-target tracking mode.
///
/// Once active, each cycle may only match against the target features that
/// were inliers in the previous cycle, so the inlier target sets form a
/// non-increasing chain. The state never deactivates on its own; losing
/// the chain is reported as [`CorrespondenceError::TrackingLost`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingState {
    active: bool,
    /// Indices into the full target feature set, ascending.
    locked: Vec<usize>,
    activation_threshold: f64,
}

/// The target features the next matching step should use.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSelection {
    pub features: FeatureSet,
    /// Full-set index of each selected feature.
    pub indices: Vec<usize>,
}

impl TrackingState {
    pub fn new(activation_threshold: f64) -> Self {
        Self {
            active: false,
            locked: Vec::new(),
            activation_threshold,
        }
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn locked_targets(&self) -> &[usize] {
        &self.locked
    }

    pub fn activation_threshold(&self) -> f64 {
        self.activation_threshold
    }

    /// Advances the state given the previous cycle's inliers.
    ///
    /// `prev_inlier_targets` are full-set target indices of the previous
    /// cycle's inliers and `mean_error` their mean pixel error.
    pub fn update(
        &self,
        full_target: &FeatureSet,
        prev_inlier_targets: &[usize],
        mean_error: f64,
    ) -> Result<(TrackingState, TargetSelection), CorrespondenceError> {
        let mut prev: Vec<usize> = prev_inlier_targets.to_vec();
        prev.sort_unstable();
        prev.dedup();
        if !self.active {
            if mean_error < self.activation_threshold && prev.len() >= MIN_FEATURES {
                let next = TrackingState {
                    active: true,
                    locked: prev,
                    activation_threshold: self.activation_threshold,
                };
                let sel = next.selection(full_target);
                return Ok((next, sel));
            }
            let all: Vec<usize> = (0..full_target.len()).collect();
            return Ok((
                self.clone(),
                TargetSelection {
                    features: full_target.clone(),
                    indices: all,
                },
            ));
        }
        let locked: Vec<usize> = prev
            .into_iter()
            .filter(|i| self.locked.binary_search(i).is_ok())
            .collect();
        if locked.len() < MIN_FEATURES {
            return Err(CorrespondenceError::TrackingLost {
                surviving: locked.len(),
            });
        }
        let next = TrackingState {
            active: true,
            locked,
            activation_threshold: self.activation_threshold,
        };
        let sel = next.selection(full_target);
        Ok((next, sel))
    }

    fn selection(&self, full_target: &FeatureSet) -> TargetSelection {
        TargetSelection {
            features: full_target.subset(&self.locked),
            indices: self.locked.clone(),
        }
    }
}

/// Free-function form of [`TrackingState::update`].
pub fn tracking_update(
    state: &TrackingState,
    full_target: &FeatureSet,
    prev_inlier_targets: &[usize],
    mean_error: f64,
) -> Result<(TrackingState, TargetSelection), CorrespondenceError> {
    state.update(full_target, prev_inlier_targets, mean_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tests::kp;

    fn target(n: usize) -> FeatureSet {
        FeatureSet::new((0..n).map(|i| kp(i as f64, 1.0, 0.5, i % 8)).collect(), 320, 240, None).unwrap()
    }

    #[test]
    fn inactive_passthrough_above_threshold() {
        let t = target(12);
        let s = TrackingState::new(10.0);
        let (next, sel) = s.update(&t, &[0, 1, 2, 3], 25.0).unwrap();
        assert_eq!(next, s);
        assert_eq!(sel.features, t);
        assert_eq!(sel.indices, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn activation_then_shrink() {
        let t = target(20);
        let s = TrackingState::new(10.0);
        let first: Vec<usize> = (0..10).map(|i| 2 * i).collect();
        let (s1, sel1) = s.update(&t, &first, 4.0).unwrap();
        assert!(s1.is_active());
        assert_eq!(sel1.indices, first);
        assert_eq!(sel1.features.len(), 10);
        // Next cycle keeps 8 of the 10 locked targets.
        let second: Vec<usize> = first[..8].to_vec();
        let (s2, sel2) = s1.update(&t, &second, 3.0).unwrap();
        assert_eq!(s2.locked_targets().len(), 8);
        assert!(sel2.indices.iter().all(|i| sel1.indices.contains(i)));
        assert_eq!(sel2.features.keypoints()[3], t.keypoints()[second[3]]);
    }

    #[test]
    fn targets_outside_the_lock_are_ignored() {
        let t = target(20);
        let (s1, _) = TrackingState::new(10.0).update(&t, &[1, 2, 3, 4], 1.0).unwrap();
        let (s2, _) = s1.update(&t, &[2, 3, 4, 15], 1.0).unwrap();
        assert_eq!(s2.locked_targets(), &[2, 3, 4]);
    }

    #[test]
    fn two_survivors_lose_tracking() {
        let t = target(20);
        let (s1, _) = TrackingState::new(10.0).update(&t, &[1, 2, 3, 4], 1.0).unwrap();
        assert_eq!(
            s1.update(&t, &[1, 2], 1.0),
            Err(CorrespondenceError::TrackingLost { surviving: 2 })
        );
    }

    #[test]
    fn too_few_inliers_do_not_activate() {
        let t = target(20);
        let (s1, sel) = TrackingState::new(10.0).update(&t, &[1, 2], 1.0).unwrap();
        assert!(!s1.is_active());
        assert_eq!(sel.indices.len(), 20);
    }
}
