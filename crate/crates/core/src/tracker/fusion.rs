use nalgebra::{Matrix4, Rotation3, UnitQuaternion, Vector3, Vector4};
use thiserror::Error;

use super::{CardCandidate, CardPoseEstimate};
use crate::geometry::{Pose, Rotation};
use crate::registry::CardRef;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no candidates to fuse")]
    EmptyCandidateSet,
    #[error("candidates belong to different cards ({0} and {1})")]
    MixedCardIds(CardRef, CardRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionPolicy {
    /// Weighted component-wise median translation and weighted chordal-mean rotation.
    #[default]
    RobustMean,
    /// The single candidate with the lowest reprojection error.
    BestResidual,
}

/// Lower weighted median: the smallest value whose cumulative weight reaches
/// half the total. `values` must be sorted.
fn weighted_median(values: &[(f64, f64)]) -> f64 {
    let total: f64 = values.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    for &(v, w) in values {
        acc += w;
        if acc >= 0.5 * total {
            return v;
        }
    }
    values.last().map(|v| v.0).unwrap_or(0.0)
}

fn quaternion(r: &Rotation) -> Vector4<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r.matrix()));
    q.into_inner().coords
}

/// Rotation maximizing the weighted sum of squared quaternion dot products,
/// i.e. the chordal L2 mean. Input order is the reduction order.
pub fn chordal_mean(rotations: &[(Rotation, f64)]) -> Rotation {
    if let Some((first, _)) = rotations.first() {
        if rotations.iter().all(|(r, _)| r == first) {
            return *first;
        }
    }
    let mut m = Matrix4::zeros();
    for (r, w) in rotations {
        let q = quaternion(r);
        m += q * q.transpose() * *w;
    }
    let eig = m.symmetric_eigen();
    let best = (0..4)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap_or(0);
    let v = eig.eigenvectors.column(best);
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[3], v[0], v[1], v[2]));
    Rotation::from_matrix_unchecked(*q.to_rotation_matrix().matrix())
}

pub fn fuse_candidates(
    candidates: &[CardCandidate],
    policy: FusionPolicy,
) -> Result<CardPoseEstimate, FusionError> {
    let first = candidates.first().ok_or(FusionError::EmptyCandidateSet)?;
    if let Some(other) = candidates.iter().find(|c| c.card != first.card) {
        return Err(FusionError::MixedCardIds(first.card, other.card));
    }
    // Fixed reduction order regardless of how the caller collected them.
    let mut sorted: Vec<&CardCandidate> = candidates.iter().collect();
    sorted.sort_by(|a, b| {
        a.source_tag
            .cmp(&b.source_tag)
            .then(a.weight.total_cmp(&b.weight))
    });

    let total_weight: f64 = sorted.iter().map(|c| c.weight).sum();
    let error = (sorted
        .iter()
        .map(|c| c.weight * c.reprojection_error.powi(2))
        .sum::<f64>()
        / total_weight)
        .sqrt();

    let pose = match policy {
        FusionPolicy::BestResidual => {
            sorted
                .iter()
                .min_by(|a, b| a.reprojection_error.total_cmp(&b.reprojection_error))
                .expect("non-empty")
                .pose
        }
        FusionPolicy::RobustMean => {
            let mut t = Vector3::zeros();
            for axis in 0..3 {
                let mut vals: Vec<(f64, f64)> = sorted
                    .iter()
                    .map(|c| (c.pose.translation[axis], c.weight))
                    .collect();
                // Stable: ties keep the tag-id order established above.
                vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                t[axis] = weighted_median(&vals);
            }
            let rots: Vec<(Rotation, f64)> =
                sorted.iter().map(|c| (c.pose.rotation, c.weight)).collect();
            Pose::new(chordal_mean(&rots), t)
        }
    };

    Ok(CardPoseEstimate {
        card: first.card,
        pose,
        candidate_count: candidates.len(),
        reprojection_error: error,
        timestamp: 0.0,
    })
}
