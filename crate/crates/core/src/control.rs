//! The classical image-based control law.
//!
//! Features are image-plane metric coordinates `s = (x₁, y₁, …, x_k, y_k)`.
//! Their rate under a camera twist `v` is `ṡ = L(s, Z) v`, with `L` the
//! stacked point interaction matrix. The commanded twist is
//! `v = −λ L̂⁺ (s − s*)`, where `L̂` is an estimate of `L`.

use nalgebra::{DMatrix, DVector, Matrix2x6, Vector2, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Twist, MIN_DEPTH};

/// Correspondences needed before the six twist components are constrained.
pub const MIN_FEATURES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature depth {0} is not positive")]
    NonPositiveDepth(f64),
    #[error("non-finite feature coordinate")]
    NonFinite,
    #[error("odd feature vector length {0}")]
    OddLength(usize),
    #[error("invalid control configuration: {0}")]
    InvalidConfig(String),
}

/// `(x₁, y₁, …, x_k, y_k)` in normalized image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(DVector<f64>);

impl FeatureVector {
    pub fn new(coords: DVector<f64>) -> Result<Self, ControlError> {
        if !coords.len().is_multiple_of(2) {
            return Err(ControlError::OddLength(coords.len()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::NonFinite);
        }
        Ok(Self(coords))
    }

    pub fn from_points(points: &[Vector2<f64>]) -> Result<Self, ControlError> {
        let coords = DVector::from_iterator(points.len() * 2, points.iter().flat_map(|p| [p.x, p.y]));
        Self::new(coords)
    }

    pub fn len(&self) -> usize {
        self.0.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn point(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.0[2 * i], self.0[2 * i + 1])
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Per-feature depths in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthVector(Vec<f64>);

impl DepthVector {
    pub fn new(depths: Vec<f64>) -> Result<Self, ControlError> {
        if let Some(&z) = depths.iter().find(|z| !(**z > MIN_DEPTH)) {
            return Err(ControlError::NonPositiveDepth(z));
        }
        Ok(Self(depths))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A `2k × 6` stacked interaction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix(DMatrix<f64>);

impl InteractionMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self, ControlError> {
        if m.ncols() != 6 {
            return Err(ControlError::DimensionMismatch {
                expected: 6,
                got: m.ncols(),
            });
        }
        if !m.nrows().is_multiple_of(2) {
            return Err(ControlError::OddLength(m.nrows()));
        }
        Ok(Self(m))
    }

    pub fn features(&self) -> usize {
        self.0.nrows() / 2
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Keeps the blocks of the listed features, in the given order.
    pub fn select(&self, features: &[usize]) -> InteractionMatrix {
        let mut m = DMatrix::zeros(features.len() * 2, 6);
        for (row, &i) in features.iter().enumerate() {
            m.rows_mut(2 * row, 2).copy_from(&self.0.rows(2 * i, 2));
        }
        InteractionMatrix(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    /// Gain λ in 1/s.
    pub lambda: f64,
    /// Relative singular-value cutoff for the pseudo-inverse.
    pub svd_tolerance: f64,
    /// Per-component saturation of the commanded twist (m/s and rad/s).
    pub max_twist: Option<f64>,
    /// Integration step in seconds.
    pub dt: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            svd_tolerance: 1e-10,
            max_twist: None,
            dt: 0.05,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ControlError::InvalidConfig(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.svd_tolerance >= 0.0) {
            return Err(ControlError::InvalidConfig(format!(
                "svd_tolerance must be >= 0, got {}",
                self.svd_tolerance
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ControlError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if let Some(m) = self.max_twist {
            if !(m > 0.0) {
                return Err(ControlError::InvalidConfig(format!("max_twist must be > 0, got {m}")));
            }
        }
        Ok(())
    }
}

/// `e = s − s*`.
pub fn feature_error(s: &FeatureVector, s_star: &FeatureVector) -> Result<DVector<f64>, ControlError> {
    if s.0.len() != s_star.0.len() {
        return Err(ControlError::DimensionMismatch {
            expected: s_star.0.len(),
            got: s.0.len(),
        });
    }
    Ok(&s.0 - &s_star.0)
}

/// The 2×6 interaction matrix of a normalized image point at depth `z`.
#[rustfmt::skip]
pub fn point_interaction_matrix(x: f64, y: f64, z: f64) -> Result<Matrix2x6<f64>, ControlError> {
    if !(z > MIN_DEPTH) {
        return Err(ControlError::NonPositiveDepth(z));
    }
    let iz = 1.0 / z;
    Ok(Matrix2x6::new(
        -iz, 0.0, x * iz, x * y,     -(1.0 + x * x), y,
        0.0, -iz, y * iz, 1.0 + y * y, -x * y,       -x,
    ))
}

pub fn stack_interaction(s: &FeatureVector, depths: &DepthVector) -> Result<InteractionMatrix, ControlError> {
    if s.len() != depths.len() {
        return Err(ControlError::DimensionMismatch {
            expected: s.len(),
            got: depths.len(),
        });
    }
    let mut m = DMatrix::zeros(2 * s.len(), 6);
    for (i, &z) in depths.as_slice().iter().enumerate() {
        let p = s.point(i);
        let block = point_interaction_matrix(p.x, p.y, z)?;
        m.fixed_view_mut::<2, 6>(2 * i, 0).copy_from(&block);
    }
    Ok(InteractionMatrix(m))
}

/// Moore-Penrose pseudo-inverse through the SVD.
///
/// Singular values at or below `tol · σ_max` are treated as zero, so
/// rank-deficient inputs give the minimum-norm least-squares inverse.
pub fn pseudo_inverse(l: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (rows, cols) = l.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = l.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = tol * sigma_max;
    let mut out = DMatrix::zeros(cols, rows);
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        out += (v_t.row(i).transpose() / sigma) * u.column(i).transpose();
    }
    out
}

/// `v = −λ L̂⁺ e`, optionally saturated per component.
pub fn control_law(e: &DVector<f64>, l_hat: &InteractionMatrix, cfg: &ControlConfig) -> Result<Twist, ControlError> {
    if e.len() != l_hat.0.nrows() {
        return Err(ControlError::DimensionMismatch {
            expected: l_hat.0.nrows(),
            got: e.len(),
        });
    }
    if e.iter().all(|v| *v == 0.0) {
        return Ok(Twist::zero());
    }
    let pinv = pseudo_inverse(&l_hat.0, cfg.svd_tolerance);
    let v = -cfg.lambda * (pinv * e);
    let mut v = Vector6::from_iterator(v.iter().copied());
    if let Some(limit) = cfg.max_twist {
        v.iter_mut().for_each(|c| *c = c.clamp(-limit, limit));
    }
    Ok(Twist::from_vector(&v))
}

/// Numerical rank with the same relative cutoff as [`pseudo_inverse`].
pub fn rank(l: &DMatrix<f64>, tol: f64) -> usize {
    if l.is_empty() {
        return 0;
    }
    let sv = l.clone().singular_values();
    let cutoff = tol * sv.max();
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{integrate_twist, pixel_to_normalized, project, CameraIntrinsics, Pose};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn feature_error_examples() {
        let s = fv(&[0.1, 0.2]);
        assert_eq!(feature_error(&s, &s).unwrap(), DVector::zeros(2));
        let e = feature_error(&s, &fv(&[0.05, 0.2])).unwrap();
        assert_relative_eq!(e, DVector::from_column_slice(&[0.05, 0.0]), epsilon = 1e-15);
        assert!(matches!(
            feature_error(&s, &fv(&[0.0, 0.0, 1.0, 1.0])),
            Err(ControlError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn odd_lengths_and_bad_depths_rejected() {
        assert!(FeatureVector::new(DVector::from_column_slice(&[1.0, 2.0, 3.0])).is_err());
        assert!(DepthVector::new(vec![1.0, 0.0]).is_err());
        assert!(point_interaction_matrix(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn point_matrix_examples() {
        let l = point_interaction_matrix(0.0, 0.0, 1.0).unwrap();
        let expected = Matrix2x6::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0);
        assert_eq!(l, expected);
        let l = point_interaction_matrix(0.05, 0.0, 2.0).unwrap();
        let expected = Matrix2x6::new(-0.5, 0.0, 0.025, 0.0, -1.0025, 0.0, 0.0, -0.5, 0.0, 1.0, 0.0, -0.05);
        assert_relative_eq!(l, expected, epsilon = 1e-15);
    }

    /// Finite-difference feature motion under a unit twist, through the
    /// projection model.
    fn fd_column(x: f64, y: f64, z: f64, axis: usize, eps: f64) -> Vector2<f64> {
        let k = CameraIntrinsics::default();
        let point = Vector3::new(x * z, y * z, z);
        let mut xi = Vector6::zeros();
        xi[axis] = 1.0;
        let moved = integrate_twist(&Pose::identity(), &Twist::from_vector(&xi), eps);
        let (px, _) = project(&moved.inverse_transform_point(&point), &k).unwrap();
        let s1 = pixel_to_normalized(&px, &k);
        (s1 - Vector2::new(x, y)) / eps
    }

    #[test]
    fn columns_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (x, y, z) = (
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.1..5.0),
            );
            let l = point_interaction_matrix(x, y, z).unwrap();
            for axis in 0..6 {
                let fd = fd_column(x, y, z, axis, 1e-6);
                let col = Vector2::new(l[(0, axis)], l[(1, axis)]);
                assert!(
                    (fd - col).norm() < 1e-4 * col.norm().max(1.0),
                    "axis {axis}: {fd} vs {col}"
                );
            }
        }
    }

    #[test]
    fn stacking_blocks() {
        let s = fv(&[0.1, -0.2, 0.0, 0.05, -0.1, 0.1]);
        let z = DepthVector::new(vec![1.0, 2.0, 0.5]).unwrap();
        let l = stack_interaction(&s, &z).unwrap();
        assert_eq!(l.as_matrix().shape(), (6, 6));
        for i in 0..3 {
            let p = s.point(i);
            let block = point_interaction_matrix(p.x, p.y, z.as_slice()[i]).unwrap();
            assert_eq!(l.as_matrix().fixed_view::<2, 6>(2 * i, 0).into_owned(), block);
        }
        let single = stack_interaction(&fv(&[0.1, -0.2]), &DepthVector::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(
            single.as_matrix().fixed_view::<2, 6>(0, 0).into_owned(),
            point_interaction_matrix(0.1, -0.2, 1.0).unwrap()
        );
        assert!(matches!(
            stack_interaction(&s, &DepthVector::new(vec![1.0]).unwrap()),
            Err(ControlError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn three_spread_points_have_full_rank() {
        let s = fv(&[0.1, -0.2, -0.15, 0.05, 0.12, 0.18]);
        let z = DepthVector::new(vec![0.3, 0.45, 0.6]).unwrap();
        let l = stack_interaction(&s, &z).unwrap();
        assert_eq!(rank(l.as_matrix(), 1e-10), 6);
    }

    #[test]
    fn pinv_of_orthonormal_rows_is_transpose() {
        let mut l = DMatrix::zeros(2, 6);
        let s = 0.5f64.sqrt();
        l[(0, 0)] = s;
        l[(0, 3)] = s;
        l[(1, 1)] = 0.6;
        l[(1, 4)] = 0.8;
        assert_relative_eq!(pseudo_inverse(&l, 1e-10), l.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn pinv_of_square_full_rank_is_inverse() {
        let s = fv(&[0.1, -0.2, -0.15, 0.05, 0.12, 0.18]);
        let z = DepthVector::new(vec![0.3, 0.45, 0.6]).unwrap();
        let l = stack_interaction(&s, &z).unwrap();
        let p = pseudo_inverse(l.as_matrix(), 1e-10);
        assert_relative_eq!(&p * l.as_matrix(), DMatrix::identity(6, 6), epsilon = 1e-9);
    }

    #[test]
    fn penrose_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let l = DMatrix::from_fn(8, 6, |_, _| rng.random_range(-1.0..1.0));
            let p = pseudo_inverse(&l, 1e-10);
            assert_relative_eq!(&l * &p * &l, l, epsilon = 1e-8);
            assert_relative_eq!(&p * &l * &p, p, epsilon = 1e-8);
            let lp = &l * &p;
            assert_relative_eq!(lp.transpose(), lp, epsilon = 1e-8);
            let pl = &p * &l;
            assert_relative_eq!(pl.transpose(), pl, epsilon = 1e-8);
        }
    }

    #[test]
    fn rank_deficient_input_gives_minimum_norm_solution() {
        // Two identical rows: rank 1.
        let mut l = DMatrix::zeros(2, 6);
        l.row_mut(0).copy_from_slice(&[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        l.row_mut(1).copy_from_slice(&[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let p = pseudo_inverse(&l, 1e-10);
        let b = DVector::from_column_slice(&[1.0, 1.0]);
        let x = &p * b;
        assert_relative_eq!(x[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.4, epsilon = 1e-12);
        assert_eq!(rank(&l, 1e-10), 1);
    }

    fn three_point_system() -> (InteractionMatrix, DVector<f64>) {
        let s = fv(&[0.1, -0.2, -0.15, 0.05, 0.12, 0.18]);
        let z = DepthVector::new(vec![0.3, 0.45, 0.6]).unwrap();
        let l = stack_interaction(&s, &z).unwrap();
        let e = DVector::from_column_slice(&[0.01, -0.02, 0.005, 0.0, -0.01, 0.003]);
        (l, e)
    }

    #[test]
    fn control_law_inverts_the_error_rate() {
        let (l, e) = three_point_system();
        let cfg = ControlConfig {
            lambda: 1.0,
            ..Default::default()
        };
        let v = control_law(&e, &l, &cfg).unwrap();
        let rate = l.as_matrix() * DVector::from_column_slice(v.to_vector().as_slice());
        assert_relative_eq!(rate, -e, epsilon = 1e-8);
    }

    #[test]
    fn control_law_zero_error_and_linearity() {
        let (l, e) = three_point_system();
        let cfg = ControlConfig::default();
        assert!(control_law(&DVector::zeros(6), &l, &cfg).unwrap().is_zero());
        let v1 = control_law(&e, &l, &cfg).unwrap().to_vector();
        let cfg2 = ControlConfig {
            lambda: 2.0 * cfg.lambda,
            ..cfg
        };
        let v2 = control_law(&e, &l, &cfg2).unwrap().to_vector();
        assert_relative_eq!(v2, 2.0 * v1, epsilon = 1e-12);
        assert!(matches!(
            control_law(&DVector::zeros(4), &l, &cfg),
            Err(ControlError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn saturation_clamps_components() {
        let (l, e) = three_point_system();
        let cfg = ControlConfig {
            lambda: 100.0,
            max_twist: Some(0.01),
            ..Default::default()
        };
        let v = control_law(&e, &l, &cfg).unwrap().to_vector();
        assert!(v.iter().all(|c| c.abs() <= 0.01));
    }

    #[test]
    fn config_validation() {
        assert!(ControlConfig::default().validate().is_ok());
        let bad = ControlConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControlConfig {
            svd_tolerance: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn error_plus_target_recovers_current(
            a in prop::collection::vec(-1.0f64..1.0, 8),
            b in prop::collection::vec(-1.0f64..1.0, 8),
        ) {
            let s = fv(&a);
            let s_star = fv(&b);
            let e = feature_error(&s, &s_star).unwrap();
            let back = e + s_star.as_vector();
            // Exact up to one rounding of the subtraction and one of the addition.
            for i in 0..back.len() {
                prop_assert!((back[i] - a[i]).abs() <= 2.0 * f64::EPSILON * (a[i].abs() + b[i].abs()));
            }
        }

        #[test]
        fn control_is_permutation_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 5;
            let pts: Vec<f64> = (0..2 * k).map(|_| rng.random_range(-0.3..0.3)).collect();
            let depths: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
            let err: Vec<f64> = (0..2 * k).map(|_| rng.random_range(-0.01..0.01)).collect();
            let l = stack_interaction(&fv(&pts), &DepthVector::new(depths).unwrap()).unwrap();
            let e = DVector::from_column_slice(&err);
            let cfg = ControlConfig::default();
            let v = control_law(&e, &l, &cfg).unwrap().to_vector();

            let perm = [3usize, 0, 4, 2, 1];
            let lp = l.select(&perm);
            let ep = DVector::from_iterator(2 * k, perm.iter().flat_map(|&i| [err[2 * i], err[2 * i + 1]]));
            let vp = control_law(&ep, &lp, &cfg).unwrap().to_vector();
            prop_assert!((v - vp).norm() < 1e-10 * (1.0 + v.norm()));
        }
    }
}
