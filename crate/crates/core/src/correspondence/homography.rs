//! Planar homography fitted with the normalized direct linear transform.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

/// A geometric model RANSAC can fit to pixel pairs `current → target`.
pub trait GeometricModel: Sized + Clone {
    /// Smallest sample that determines the model.
    const MIN_SAMPLE: usize;

    fn fit(current: &[Vector2<f64>], target: &[Vector2<f64>]) -> Option<Self>;

    /// Residual in pixels for one pair.
    fn residual(&self, current: &Vector2<f64>, target: &Vector2<f64>) -> f64;

    /// True when a minimal sample cannot determine a unique model.
    fn is_degenerate(current: &[Vector2<f64>], target: &[Vector2<f64>]) -> bool;
}

/// `target ~ H · current` in homogeneous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Homography {
    pub fn new(matrix: Matrix3<f64>) -> Option<Self> {
        let scale = matrix.norm();
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let m = if matrix[(2, 2)].abs() > 1e-12 * scale {
            matrix / matrix[(2, 2)]
        } else {
            matrix / scale
        };
        let inverse = m.try_inverse()?;
        Some(Self { matrix: m, inverse })
    }

    pub fn transfer(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        apply(&self.matrix, p)
    }

    pub fn inverse_transfer(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        apply(&self.inverse, p)
    }
}

fn apply(h: &Matrix3<f64>, p: &Vector2<f64>) -> Option<Vector2<f64>> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    if q.z.abs() < 1e-12 {
        return None;
    }
    Some(Vector2::new(q.x / q.z, q.y / q.z))
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizing_transform(points: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(
        s,
        0.0,
        -s * centroid.x,
        0.0,
        s,
        -s * centroid.y,
        0.0,
        0.0,
        1.0,
    ))
}

/// Normalized DLT over all given pairs (at least four).
pub fn fit_homography(current: &[Vector2<f64>], target: &[Vector2<f64>]) -> Option<Homography> {
    let n = current.len();
    if n < 4 || target.len() != n {
        return None;
    }
    let tc = normalizing_transform(current)?;
    let tt = normalizing_transform(target)?;
    // A thin SVD of a 8×9 system drops the null vector; pad to 9 rows.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let p = tc * Vector3::new(current[i].x, current[i].y, 1.0);
        let q = tt * Vector3::new(target[i].x, target[i].y, 1.0);
        let (x, y) = (p.x / p.z, p.y / p.z);
        let (u, v) = (q.x / q.z, q.y / q.z);
        a.row_mut(2 * i)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(2 * i + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let denorm = tt.try_inverse()? * hn * tc;
    Homography::new(denorm)
}

/// Sine of the smallest angle in any point triple; near zero means collinear.
fn collinear(points: &[Vector2<f64>]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let a = points[j] - points[i];
                let b = points[k] - points[i];
                let la = a.norm();
                let lb = b.norm();
                if la < 1e-9 || lb < 1e-9 {
                    return true;
                }
                let sine = (a.x * b.y - a.y * b.x).abs() / (la * lb);
                if sine < 1e-3 {
                    return true;
                }
            }
        }
    }
    false
}

impl GeometricModel for Homography {
    const MIN_SAMPLE: usize = 4;

    fn fit(current: &[Vector2<f64>], target: &[Vector2<f64>]) -> Option<Self> {
        fit_homography(current, target)
    }

    /// Symmetric transfer error: the larger of the forward and backward
    /// transfer distances.
    fn residual(&self, current: &Vector2<f64>, target: &Vector2<f64>) -> f64 {
        match (self.transfer(current), self.inverse_transfer(target)) {
            (Some(fwd), Some(bwd)) => (fwd - target).norm().max((bwd - current).norm()),
            _ => f64::INFINITY,
        }
    }

    fn is_degenerate(current: &[Vector2<f64>], target: &[Vector2<f64>]) -> bool {
        collinear(current) || collinear(target)
    }
}
