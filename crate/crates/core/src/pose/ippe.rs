//! Infinitesimal plane-based pose estimation for a square tag.
//!
//! The homography from the tag plane to normalized image coordinates is
//! differentiated at the tag center. That 2x2 Jacobian, together with the
//! image of the center, pins down the plane rotation up to a two-fold
//! ambiguity; both rotations are completed to full poses by solving for the
//! translation and ranked by pixel residual.

use nalgebra::{Matrix2, Matrix3, Point2, Vector3};

use super::{homography_from_4_points, PoseError};
use crate::geometry::{
    canonical_tag_corners, reprojection_error, CameraIntrinsics, ModelPoint, Pixel, Pose,
    Rotation,
};

/// Residual gap (px) under which the two planar solutions are reported as ambiguous.
pub const DEFAULT_AMBIGUITY_MARGIN: f64 = 0.3;

/// The two planar pose candidates, best first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSolutionPair {
    pub best: Pose,
    pub best_error: f64,
    pub alternate: Option<Pose>,
    pub alternate_error: Option<f64>,
    pub ambiguous: bool,
}

pub fn ippe_solve(
    k: &CameraIntrinsics,
    side: f64,
    pixels: &[Pixel; 4],
) -> Result<PoseSolutionPair, PoseError> {
    ippe_solve_with_margin(k, side, pixels, DEFAULT_AMBIGUITY_MARGIN)
}

pub fn ippe_solve_with_margin(
    k: &CameraIntrinsics,
    side: f64,
    pixels: &[Pixel; 4],
    ambiguity_margin: f64,
) -> Result<PoseSolutionPair, PoseError> {
    if !(side.is_finite() && side > 0.0) {
        return Err(PoseError::InvalidSize(side));
    }
    let model = canonical_tag_corners(side);
    let model_uw: [Point2<f64>; 4] = std::array::from_fn(|i| Point2::new(model[i].x, model[i].z));
    let normalized: [Point2<f64>; 4] = std::array::from_fn(|i| k.normalize(&pixels[i]));
    let h = homography_from_4_points(&model_uw, &normalized)?;
    let h = h.matrix();

    // Image of the tag center and the homography Jacobian there.
    let v = Point2::new(h[(0, 2)] / h[(2, 2)], h[(1, 2)] / h[(2, 2)]);
    let jac = Matrix2::new(
        h[(0, 0)] - h[(2, 0)] * v.x,
        h[(0, 1)] - h[(2, 1)] * v.x,
        h[(1, 0)] - h[(2, 0)] * v.y,
        h[(1, 1)] - h[(2, 1)] * v.y,
    ) / h[(2, 2)];

    let (r1, r2) = planar_rotations(&jac, &v)?;

    let mut candidates = Vec::with_capacity(2);
    for plane_rot in [r1, r2] {
        let rotation = to_tag_frame(&plane_rot);
        let Some(translation) = solve_translation(&rotation, &model, &normalized) else {
            continue;
        };
        let pose = Pose::new(rotation, translation);
        if let Ok(err) = reprojection_error(k, &pose, &model, pixels) {
            candidates.push((pose, err));
        }
    }
    rank_candidates(candidates, ambiguity_margin)
}

fn rank_candidates(
    mut candidates: Vec<(Pose, f64)>,
    margin: f64,
) -> Result<PoseSolutionPair, PoseError> {
    // Stable sort keeps the first IPPE branch first on exact ties.
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut it = candidates.into_iter();
    let (best, best_error) = it.next().ok_or(PoseError::NoValidPose)?;
    let alt = it.next();
    let ambiguous = alt
        .map(|(_, e)| (e - best_error).abs() < margin)
        .unwrap_or(false);
    Ok(PoseSolutionPair {
        best,
        best_error,
        alternate: alt.map(|a| a.0),
        alternate_error: alt.map(|a| a.1),
        ambiguous,
    })
}

/// Both rotations of a plane (normal along the third column) whose
/// perspective image has Jacobian `jac` at the normalized image point `v`.
fn planar_rotations(
    jac: &Matrix2<f64>,
    v: &Point2<f64>,
) -> Result<(Matrix3<f64>, Matrix3<f64>), PoseError> {
    let (p, q) = (v.x, v.y);
    let t = (p * p + q * q).sqrt();
    let s = (t * t + 1.0).sqrt();

    // Minimal rotation taking the optical axis onto the ray through v.
    let rv = if t < 1e-15 {
        Matrix3::identity()
    } else {
        let costh = 1.0 / s;
        let sinth = t / s;
        let (k0, k1) = (p / t, q / t);
        Matrix3::new(
            (costh - 1.0) * k0 * k0 + 1.0,
            k0 * k1 * (costh - 1.0),
            k0 * sinth,
            k0 * k1 * (costh - 1.0),
            (costh - 1.0) * k1 * k1 + 1.0,
            k1 * sinth,
            -k0 * sinth,
            -k1 * sinth,
            (costh - 1.0) * (k0 * k0 + k1 * k1) + 1.0,
        )
    };

    let b = Matrix2::new(
        rv[(0, 0)] - p * rv[(2, 0)],
        rv[(0, 1)] - p * rv[(2, 1)],
        rv[(1, 0)] - q * rv[(2, 0)],
        rv[(1, 1)] - q * rv[(2, 1)],
    );
    let b_inv = b.try_inverse().ok_or(PoseError::DegenerateConfiguration)?;
    let a = b_inv * jac;

    // Largest singular value of the 2x2 matrix a.
    let ata00 = a[(0, 0)].powi(2) + a[(0, 1)].powi(2);
    let ata01 = a[(0, 0)] * a[(1, 0)] + a[(0, 1)] * a[(1, 1)];
    let ata11 = a[(1, 0)].powi(2) + a[(1, 1)].powi(2);
    let gamma = (0.5
        * (ata00 + ata11 + ((ata00 - ata11).powi(2) + 4.0 * ata01 * ata01).sqrt()))
    .sqrt();
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(PoseError::DegenerateConfiguration);
    }

    let rt = a / gamma;
    let b0 = (1.0 - rt[(0, 0)].powi(2) - rt[(1, 0)].powi(2)).max(0.0).sqrt();
    let mut b1 = (1.0 - rt[(0, 1)].powi(2) - rt[(1, 1)].powi(2)).max(0.0).sqrt();
    if -rt[(0, 0)] * rt[(0, 1)] - rt[(1, 0)] * rt[(1, 1)] < 0.0 {
        b1 = -b1;
    }

    let complete = |sign: f64| {
        let c0 = Vector3::new(rt[(0, 0)], rt[(1, 0)], sign * b0);
        let c1 = Vector3::new(rt[(0, 1)], rt[(1, 1)], sign * b1);
        let c2 = c0.cross(&c1);
        rv * Matrix3::from_columns(&[c0, c1, c2])
    };
    Ok((complete(1.0), complete(-1.0)))
}

/// Re-expresses a plane rotation (columns: plane x, plane y, normal) in the
/// tag frame where the plane is spanned by U and W. The input is already
/// orthonormal, so this is a column permutation.
fn to_tag_frame(plane_rot: &Matrix3<f64>) -> Rotation {
    let u = plane_rot.column(0).into_owned();
    let w = plane_rot.column(1).into_owned();
    let v = w.cross(&u);
    Rotation::from_matrix_unchecked(Matrix3::from_columns(&[u, v, w]))
}

/// Least-squares translation for a known rotation, from the linearized
/// collinearity constraints of every correspondence.
pub(crate) fn solve_translation(
    rotation: &Rotation,
    model: &[ModelPoint; 4],
    normalized: &[Point2<f64>; 4],
) -> Option<Vector3<f64>> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (m, n) in model.iter().zip(normalized) {
        let rp = rotation.rotate(&m.coords);
        let rows = [
            (Vector3::new(1.0, 0.0, -n.x), n.x * rp.z - rp.x),
            (Vector3::new(0.0, 1.0, -n.y), n.y * rp.z - rp.y),
        ];
        for (a, b) in rows {
            ata += a * a.transpose();
            atb += a * b;
        }
    }
    ata.cholesky().map(|c| c.solve(&atb))
}
