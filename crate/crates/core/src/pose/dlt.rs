use nalgebra::{Matrix3, Point2};

use super::{homography_from_4_points, PoseError};
use crate::geometry::{canonical_tag_corners, CameraIntrinsics, Pixel, Pose, Rotation};

/// Planar pose by homography decomposition.
///
/// The general DLT for a projection matrix is rank deficient on coplanar
/// points, so the linear step estimates the plane homography instead; its
/// first two columns (after removing `K`) are scaled rotation columns and the
/// third is the scaled translation. The rotation is projected onto SO(3).
pub fn dlt_solve(k: &CameraIntrinsics, side: f64, pixels: &[Pixel; 4]) -> Result<Pose, PoseError> {
    if !(side.is_finite() && side > 0.0) {
        return Err(PoseError::InvalidSize(side));
    }
    let model = canonical_tag_corners(side);
    let model_uw: [Point2<f64>; 4] = std::array::from_fn(|i| Point2::new(model[i].x, model[i].z));
    let normalized: [Point2<f64>; 4] = std::array::from_fn(|i| k.normalize(&pixels[i]));
    let h = *homography_from_4_points(&model_uw, &normalized)?.matrix();

    let h_u = h.column(0).into_owned();
    let h_w = h.column(1).into_owned();
    let h_t = h.column(2).into_owned();
    let mut scale = 2.0 / (h_u.norm() + h_w.norm());
    if h_t.z * scale < 0.0 {
        scale = -scale;
    }
    let r_u = h_u * scale;
    let r_w = h_w * scale;
    let r_v = r_w.cross(&r_u);
    let rotation = Rotation::nearest(&Matrix3::from_columns(&[r_u, r_v, r_w]));
    let pose = Pose::new(rotation, h_t * scale);

    if model.iter().any(|m| pose.transform_point(m).z <= 0.0) {
        return Err(PoseError::NoValidPose);
    }
    Ok(pose)
}
