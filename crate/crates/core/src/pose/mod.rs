//! Per-tag pose estimation from four observed corners.

mod dlt;
mod homography;
mod ippe;
mod lm;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use dlt::dlt_solve;
pub use homography::{homography_from_4_points, Homography};
pub use ippe::{ippe_solve, ippe_solve_with_margin, PoseSolutionPair, DEFAULT_AMBIGUITY_MARGIN};
pub use lm::{
    lm_refine, params_of, pose_of, refine_points, residuals_and_jacobian, Jacobian, LmConfig, LmResult, Params,
    Residuals, Termination,
};

use crate::geometry::{canonical_tag_corners, reprojection_error, CameraIntrinsics, Pose};
use crate::observation::TagObservation;
use crate::registry::TagSpec;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PoseError {
    #[error("degenerate corner configuration")]
    DegenerateConfiguration,
    #[error("no candidate pose places the tag in front of the camera")]
    NoValidPose,
    #[error("tag size must be positive, got {0}")]
    InvalidSize(f64),
    #[error("observation is for tag {observed} but spec is for tag {expected}")]
    TagMismatch { expected: u32, observed: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SolverKind {
    #[default]
    Ippe,
    Dlt,
    /// Levenberg–Marquardt seeded by the DLT pose.
    LmRefined,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Ippe, SolverKind::Dlt, SolverKind::LmRefined];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Ippe => "ippe",
            SolverKind::Dlt => "dlt",
            SolverKind::LmRefined => "lm",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ippe" => Ok(SolverKind::Ippe),
            "dlt" => Ok(SolverKind::Dlt),
            "lm" | "lm-refined" => Ok(SolverKind::LmRefined),
            other => Err(format!("unknown solver '{other}' (expected ippe, dlt or lm)")),
        }
    }
}

/// Pose of one tag in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagPoseEstimate {
    pub tag_id: u32,
    pub pose: Pose,
    pub reprojection_error: f64,
    pub ambiguous: bool,
}

pub fn estimate_tag_pose(
    k: &CameraIntrinsics,
    spec: &TagSpec,
    obs: &TagObservation,
    solver: SolverKind,
) -> Result<TagPoseEstimate, PoseError> {
    if spec.tag_id != obs.tag_id {
        return Err(PoseError::TagMismatch {
            expected: spec.tag_id,
            observed: obs.tag_id,
        });
    }
    let side = spec.size_class.side_length();
    let (pose, error, ambiguous) = match solver {
        SolverKind::Ippe => {
            let sol = ippe_solve(k, side, &obs.corners)?;
            (sol.best, sol.best_error, sol.ambiguous)
        }
        SolverKind::Dlt => {
            let pose = dlt_solve(k, side, &obs.corners)?;
            let err = reprojection_error(k, &pose, &canonical_tag_corners(side), &obs.corners)
                .map_err(|_| PoseError::NoValidPose)?;
            (pose, err, false)
        }
        SolverKind::LmRefined => {
            let init = dlt_solve(k, side, &obs.corners)?;
            let out = lm_refine(k, side, &obs.corners, &init, &LmConfig::default())?;
            (out.pose, out.final_error, false)
        }
    };
    Ok(TagPoseEstimate {
        tag_id: obs.tag_id,
        pose,
        reprojection_error: error,
        ambiguous,
    })
}
