//! Geometric primitives shared by every stage of the pipeline.
//!
//! Conventions used throughout the crate:
//!
//! * Model space is `(U, V, W)` in meters. A tag or card lies in the `V = 0`
//!   plane, spanned by `U` and `W`. The printed face looks along `-V`.
//! * Camera space follows the pinhole convention: `Z` forward, `X` right,
//!   `Y` down. Pixels are `(x, y)` with the origin at the top-left.
//! * A [`Pose`] maps points from its source frame into its target frame:
//!   `p_target = R * p_source + T`.

use nalgebra::{Matrix3, Matrix4, Point2, Point3, Vector3};
use thiserror::Error;

pub type ModelPoint = Point3<f64>;
pub type WorldPoint = Point3<f64>;
pub type Pixel = Point2<f64>;

/// Tolerance on `R^T R = I` and `det R = 1` accepted by [`Rotation::from_matrix`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point has non-positive depth z = {0}")]
    NonPositiveDepth(f64),
    #[error("length mismatch: {model} model points vs {observed} observations")]
    LengthMismatch { model: usize, observed: usize },
    #[error("empty point set")]
    Empty,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("matrix is not a rotation (orthogonality error {ortho:e}, det {det})")]
    NotARotation { ortho: f64, det: f64 },
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point must be finite, got cx={cx} cy={cy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Maps a pixel to normalized image coordinates (`K^-1 [x y 1]`).
    pub fn normalize(&self, px: &Pixel) -> Point2<f64> {
        Point2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn denormalize(&self, p: &Point2<f64>) -> Pixel {
        Pixel::new(self.fx * p.x + self.cx, self.fy * p.y + self.cy)
    }
}

impl Default for CameraIntrinsics {
    /// 1920x1080 camera with a 1000 px focal length.
    fn default() -> Self {
        Self {
            fx: 1000.0,
            fy: 1000.0,
            cx: 960.0,
            cy: 540.0,
        }
    }
}

/// A proper rotation stored as an orthonormal 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and handedness.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let ortho = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if !(ortho < ROTATION_TOLERANCE && (det - 1.0).abs() < ROTATION_TOLERANCE) {
            return Err(GeometryError::NotARotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller knows to be a rotation (e.g. a product of rotations).
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Closest rotation in the Frobenius sense, via SVD.
    pub fn nearest(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self(u * d * v_t)
    }

    /// Rodrigues formula: rotation by `|rvec|` radians about `rvec / |rvec|`.
    pub fn from_rodrigues(rvec: &Vector3<f64>) -> Self {
        let theta2 = rvec.norm_squared();
        let k = rvec.cross_matrix();
        // sin(t)/t and (1 - cos t)/t^2, with Taylor expansions near zero.
        let (a, b) = if theta2 < 1e-12 {
            (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
        } else {
            let theta = theta2.sqrt();
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        Self(Matrix3::identity() + k * a + k * k * b)
    }

    /// Inverse of [`Rotation::from_rodrigues`]; the angle is in `[0, pi]`.
    ///
    /// At exactly `pi` the axis is ambiguous; the returned vector then has its
    /// first non-zero component positive.
    pub fn to_rodrigues(&self) -> Vector3<f64> {
        let r = &self.0;
        let skew = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        ) * 0.5;
        let sin = skew.norm();
        let cos = 0.5 * (r.trace() - 1.0);
        let theta = sin.atan2(cos);
        if theta < 1e-6 {
            // theta / sin(theta) = 1 + theta^2 / 6 + ...
            return skew * (1.0 + theta * theta / 6.0);
        }
        if cos > -0.9 {
            return skew * (theta / sin);
        }
        // Near pi the skew part vanishes; recover the axis from the symmetric part,
        // which is (1 - cos) a a^T + cos I.
        let sym = (r + r.transpose()) * 0.5;
        let outer = (sym - Matrix3::identity() * cos) / (1.0 - cos);
        let col = (0..3)
            .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
            .unwrap_or(0);
        let mut axis = outer.column(col).into_owned();
        axis /= axis.norm();
        let dot = axis.dot(&skew);
        let flip = if dot.abs() < 1e-9 {
            lexicographically_negative(&axis)
        } else {
            dot < 0.0
        };
        if flip {
            axis = -axis;
        }
        axis * theta
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic distance in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.inverse().compose(other).angle()
    }

    pub fn angle(&self) -> f64 {
        self.to_rodrigues().norm()
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

fn lexicographically_negative(v: &Vector3<f64>) -> bool {
    for c in v.iter() {
        if c.abs() > 1e-12 {
            return *c < 0.0;
        }
    }
    false
}

/// Rigid transform between two frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_rodrigues(rvec: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(Rotation::from_rodrigues(&rvec), translation)
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.rotate(&p.coords) + self.translation)
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle (rad) and translation distance (m) between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        (
            self.rotation.angle_to(&other.rotation),
            (self.translation - other.translation).norm(),
        )
    }
}

/// The four corners of a square tag with side `side` meters, in the fixed
/// registry-wide order.
pub fn canonical_tag_corners(side: f64) -> [ModelPoint; 4] {
    let h = 0.5 * side;
    [
        ModelPoint::new(-h, 0.0, -h),
        ModelPoint::new(h, 0.0, -h),
        ModelPoint::new(h, 0.0, h),
        ModelPoint::new(-h, 0.0, h),
    ]
}

pub fn transform_model_to_world(pose: &Pose, p: &ModelPoint) -> WorldPoint {
    pose.transform_point(p)
}

pub fn project_point(k: &CameraIntrinsics, w: &WorldPoint) -> Result<Pixel, GeometryError> {
    if !(w.z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(w.z));
    }
    Ok(Pixel::new(
        k.fx * w.x / w.z + k.cx,
        k.fy * w.y / w.z + k.cy,
    ))
}

/// RMS pixel distance between the projected model points and the observations.
pub fn reprojection_error(
    k: &CameraIntrinsics,
    pose: &Pose,
    model: &[ModelPoint],
    observed: &[Pixel],
) -> Result<f64, GeometryError> {
    if model.len() != observed.len() {
        return Err(GeometryError::LengthMismatch {
            model: model.len(),
            observed: observed.len(),
        });
    }
    if model.is_empty() {
        return Err(GeometryError::Empty);
    }
    let mut sum = 0.0;
    for (m, o) in model.iter().zip(observed) {
        let p = project_point(k, &pose.transform_point(m))?;
        sum += (p - o).norm_squared();
    }
    Ok((sum / model.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn canonical_corners_unit_and_degenerate() {
        let c = canonical_tag_corners(1.0);
        let expected = [
            (-0.5, 0.0, -0.5),
            (0.5, 0.0, -0.5),
            (0.5, 0.0, 0.5),
            (-0.5, 0.0, 0.5),
        ];
        for (p, e) in c.iter().zip(expected) {
            assert_eq!((p.x, p.y, p.z), e);
        }
        for p in canonical_tag_corners(0.0) {
            assert_eq!(p, ModelPoint::origin());
        }
    }

    #[test]
    fn large_tag_model_is_three_small_models() {
        let s0 = 0.00762;
        let small = canonical_tag_corners(s0);
        let large = canonical_tag_corners(3.0 * s0);
        for (a, b) in small.iter().zip(&large) {
            assert!((a.coords * 3.0 - b.coords).norm() < 1e-15);
        }
    }

    #[test]
    fn rodrigues_known_rotations() {
        assert_eq!(
            Rotation::from_rodrigues(&Vector3::zeros()).matrix(),
            &Matrix3::identity()
        );
        let half = Rotation::from_rodrigues(&Vector3::new(PI, 0.0, 0.0));
        let diag = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        assert!((half.matrix() - diag).norm() < 1e-15);
        let quarter = Rotation::from_rodrigues(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((quarter.matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn to_rodrigues_identity_and_half_turn() {
        assert_eq!(Rotation::identity().to_rodrigues(), Vector3::zeros());
        let diag = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        let r = Rotation::from_matrix(diag).unwrap().to_rodrigues();
        assert!((r - Vector3::new(PI, 0.0, 0.0)).norm() < 1e-12);
        // Same half turn, opposite sign convention input.
        let r2 = Rotation::from_rodrigues(&Vector3::new(-PI, 0.0, 0.0)).to_rodrigues();
        assert!((r2 - Vector3::new(PI, 0.0, 0.0)).norm() < 1e-12);
        let r3 = Rotation::from_rodrigues(&Vector3::new(0.0, -PI, 0.0)).to_rodrigues();
        assert!((r3 - Vector3::new(0.0, PI, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn from_matrix_rejects_reflections() {
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            Rotation::from_matrix(refl),
            Err(GeometryError::NotARotation { .. })
        ));
    }

    #[test]
    fn transform_examples() {
        let p = ModelPoint::new(1.0, 2.0, 3.0);
        assert_eq!(transform_model_to_world(&Pose::identity(), &p), p);
        let pose = Pose::new(Rotation::identity(), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(
            transform_model_to_world(&pose, &ModelPoint::origin()),
            WorldPoint::new(0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn project_examples() {
        let unit = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(
            project_point(&unit, &WorldPoint::new(0.0, 0.0, 1.0)).unwrap(),
            Pixel::new(0.0, 0.0)
        );
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let p = project_point(&k, &WorldPoint::new(0.1, 0.0, 1.0)).unwrap();
        assert!((p - Pixel::new(370.0, 240.0)).norm() < 1e-12);
        assert_eq!(
            project_point(&k, &WorldPoint::new(0.0, 0.0, -1.0)),
            Err(GeometryError::NonPositiveDepth(-1.0))
        );
        assert!(project_point(&k, &WorldPoint::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn reprojection_error_examples() {
        let k = CameraIntrinsics::default();
        let pose = Pose::from_rodrigues(Vector3::new(1.4, 0.1, 0.0), Vector3::new(0.0, 0.0, 0.5));
        let model = canonical_tag_corners(0.05);
        let mut obs: Vec<Pixel> = model
            .iter()
            .map(|m| project_point(&k, &pose.transform_point(m)).unwrap())
            .collect();
        assert!(reprojection_error(&k, &pose, &model, &obs).unwrap() < 1e-12);
        obs[2].x += 3.0;
        obs[2].y += 4.0;
        let e = reprojection_error(&k, &pose, &model, &obs).unwrap();
        assert!((e - 2.5).abs() < 1e-9);
        assert!(matches!(
            reprojection_error(&k, &pose, &model, &obs[..3]),
            Err(GeometryError::LengthMismatch { .. })
        ));
        let behind = Pose::new(Rotation::identity(), Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(
            reprojection_error(&k, &behind, &model, &obs),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }
}
