use nalgebra::Vector2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::homography::{GeometricModel, Homography};
use super::matching::{Correspondence, CorrespondenceSet};
use super::CorrespondenceError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    /// Pixels.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Probability of drawing at least one all-inlier sample.
    pub confidence: f64,
    pub min_sample: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 2.0,
            max_iterations: 2000,
            confidence: 0.999,
            min_sample: Homography::MIN_SAMPLE,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), CorrespondenceError> {
        let bad = |m: String| Err(CorrespondenceError::InvalidConfig(m));
        if !(self.inlier_threshold > 0.0) {
            return bad(format!("inlier_threshold must be > 0, got {}", self.inlier_threshold));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence must be in (0, 1), got {}", self.confidence));
        }
        if self.min_sample < Homography::MIN_SAMPLE {
            return bad(format!("min_sample must be >= {}", Homography::MIN_SAMPLE));
        }
        Ok(())
    }
}

/// The consensus subset of a [`CorrespondenceSet`] and its model.
#[derive(Debug, Clone, PartialEq)]
pub struct InlierSet<M = Homography> {
    /// Positions in the parent correspondence set, ascending.
    pub indices: Vec<usize>,
    pub pairs: Vec<Correspondence>,
    pub current_pixels: Vec<Vector2<f64>>,
    pub target_pixels: Vec<Vector2<f64>>,
    pub residuals: Vec<f64>,
    pub model: M,
    pub iterations: usize,
}

impl<M> InlierSet<M> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Iterations needed to see an all-inlier sample with the given confidence.
pub fn required_iterations(confidence: f64, inlier_ratio: f64, sample: usize) -> usize {
    let good = inlier_ratio.powi(sample as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good).ln();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

fn consensus<M: GeometricModel>(model: &M, c: &CorrespondenceSet, threshold: f64) -> Vec<usize> {
    (0..c.len())
        .filter(|&i| model.residual(&c.current_pixels[i], &c.target_pixels[i]) <= threshold)
        .collect()
}

fn gather(points: &[Vector2<f64>], idx: &[usize]) -> Vec<Vector2<f64>> {
    idx.iter().map(|&i| points[i]).collect()
}

/// RANSAC with a planar homography model.
pub fn ransac_inliers(c: &CorrespondenceSet, cfg: &RansacConfig) -> Result<InlierSet, CorrespondenceError> {
    ransac_with_model::<Homography>(c, cfg)
}

/// Samples minimal subsets, keeps the largest consensus, then refits on it.
///
/// Ties keep the earliest iteration. Degenerate samples count toward the
/// iteration budget and are redrawn.
pub fn ransac_with_model<M: GeometricModel>(
    c: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<InlierSet<M>, CorrespondenceError> {
    cfg.validate()?;
    let n = c.len();
    let s = cfg.min_sample.max(M::MIN_SAMPLE);
    if n < s {
        return Err(CorrespondenceError::TooFewCorrespondences { needed: s, got: n });
    }
    let mut rng = rng::rng(cfg.seed);
    let mut best: Option<(M, Vec<usize>)> = None;
    let mut budget = cfg.max_iterations;
    let mut iterations = 0;
    while iterations < budget {
        iterations += 1;
        let sample = index::sample(&mut rng, n, s).into_vec();
        let cur = gather(&c.current_pixels, &sample);
        let tgt = gather(&c.target_pixels, &sample);
        if M::is_degenerate(&cur, &tgt) {
            continue;
        }
        let Some(model) = M::fit(&cur, &tgt) else {
            continue;
        };
        let inliers = consensus(&model, c, cfg.inlier_threshold);
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            let ratio = inliers.len() as f64 / n as f64;
            budget = required_iterations(cfg.confidence, ratio, s).min(cfg.max_iterations);
            best = Some((model, inliers));
        }
    }
    let (mut model, mut inliers) = best.ok_or(CorrespondenceError::NoConsensus)?;
    if inliers.len() < s {
        return Err(CorrespondenceError::NoConsensus);
    }
    // Refit on the consensus while it does not shrink.
    for _ in 0..3 {
        let Some(refit) = M::fit(
            &gather(&c.current_pixels, &inliers),
            &gather(&c.target_pixels, &inliers),
        ) else {
            break;
        };
        let refit_inliers = consensus(&refit, c, cfg.inlier_threshold);
        if refit_inliers.len() < inliers.len() {
            break;
        }
        let unchanged = refit_inliers == inliers;
        model = refit;
        inliers = refit_inliers;
        if unchanged {
            break;
        }
    }
    let residuals = inliers
        .iter()
        .map(|&i| model.residual(&c.current_pixels[i], &c.target_pixels[i]))
        .collect();
    Ok(InlierSet {
        pairs: inliers.iter().map(|&i| c.pairs[i]).collect(),
        current_pixels: gather(&c.current_pixels, &inliers),
        target_pixels: gather(&c.target_pixels, &inliers),
        indices: inliers,
        residuals,
        model,
        iterations,
    })
}
