use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::features::FeatureSet;

/// One matched pair, indexing into the current and target feature sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub current: usize,
    pub target: usize,
    /// Euclidean descriptor distance.
    pub distance: f64,
}

/// Matched pairs with their pixel coordinates, sorted by ascending distance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
    pub current_pixels: Vec<Vector2<f64>>,
    pub target_pixels: Vec<Vector2<f64>>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Builds a set from explicit pixel pairs; indices are positions.
    pub fn from_pixels(current: Vec<Vector2<f64>>, target: Vec<Vector2<f64>>) -> Self {
        assert_eq!(current.len(), target.len(), "pixel lists must pair up");
        let pairs = (0..current.len())
            .map(|i| Correspondence {
                current: i,
                target: i,
                distance: 0.0,
            })
            .collect();
        Self {
            pairs,
            current_pixels: current,
            target_pixels: target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Keep a pair only when each side is the other's nearest neighbour.
    pub mutual: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { mutual: true }
    }
}

fn sq_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mutual nearest-neighbour matching on descriptors.
pub fn match_nn(current: &FeatureSet, target: &FeatureSet) -> CorrespondenceSet {
    match_nn_with(current, target, &MatchConfig::default())
}

pub fn match_nn_with(current: &FeatureSet, target: &FeatureSet, cfg: &MatchConfig) -> CorrespondenceSet {
    let (n, m) = (current.len(), target.len());
    if n == 0 || m == 0 {
        return CorrespondenceSet::default();
    }
    let cur = current.keypoints();
    let tgt = target.keypoints();
    // Nearest target per current keypoint, and nearest current per target.
    // Strict comparisons keep the lowest index on ties.
    let mut best_target = vec![(f32::INFINITY, usize::MAX); n];
    let mut best_current = vec![(f32::INFINITY, usize::MAX); m];
    for (i, c) in cur.iter().enumerate() {
        for (j, t) in tgt.iter().enumerate() {
            let d = sq_distance(&c.descriptor, &t.descriptor);
            if d < best_target[i].0 {
                best_target[i] = (d, j);
            }
            if d < best_current[j].0 {
                best_current[j] = (d, i);
            }
        }
    }
    let mut pairs: Vec<Correspondence> = best_target
        .iter()
        .enumerate()
        .filter(|(i, (_, j))| *j != usize::MAX && (!cfg.mutual || best_current[*j].1 == *i))
        .map(|(i, &(d, j))| Correspondence {
            current: i,
            target: j,
            distance: f64::from(d).sqrt(),
        })
        .collect();
    pairs.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.target.cmp(&b.target))
            .then(a.current.cmp(&b.current))
    });
    let current_pixels = pairs.iter().map(|p| cur[p.current].pixel).collect();
    let target_pixels = pairs.iter().map(|p| tgt[p.target].pixel).collect();
    CorrespondenceSet {
        pairs,
        current_pixels,
        target_pixels,
    }
}
