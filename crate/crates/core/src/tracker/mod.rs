//! Frame pipeline: tag observations to per-tag poses, per-tag poses to card
//! candidates through the stored tag-to-card offsets, candidates to one
//! fused pose per card.
//!
//! There is no temporal filtering; jitter is measured by [`jitter_metrics`]
//! rather than smoothed away.

mod fusion;
mod jitter;
mod lifecycle;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::Vector3;
use rayon::prelude::*;

pub use fusion::{chordal_mean, fuse_candidates, FusionError, FusionPolicy};
pub use jitter::{jitter_metrics, CardJitter, JitterError, JitterReport, ROTATIONAL_JITTER_LIMIT_DEG};
pub use lifecycle::{lifecycle_apply, LifecycleEvent, TrackerLifecycle};

use crate::geometry::{CameraIntrinsics, Pose};
use crate::observation::{ObservationFrame, TraceError};
use crate::pose::{estimate_tag_pose, SolverKind, TagPoseEstimate};
use crate::registry::{CardRef, Registry};

/// Weight of a candidate whose tag pose had an ambiguous planar solution.
pub const AMBIGUOUS_WEIGHT: f64 = 0.25;

/// Below this many observations the per-tag solves run on the calling thread.
const PARALLEL_THRESHOLD: usize = 256;

/// Card pose proposed by one tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardCandidate {
    pub card: CardRef,
    /// Card frame in the camera frame.
    pub pose: Pose,
    pub source_tag: u32,
    pub weight: f64,
    pub reprojection_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardPoseEstimate {
    pub card: CardRef,
    pub pose: Pose,
    pub candidate_count: usize,
    /// Weighted RMS of the contributing tags' reprojection errors (px).
    pub reprojection_error: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateBatch {
    pub candidates: Vec<CardCandidate>,
    pub tag_estimates: Vec<TagPoseEstimate>,
    /// Observations dropped for an unknown id or a failed solve.
    pub skipped: usize,
}

fn solve_one(
    obs: &crate::observation::TagObservation,
    registry: &Registry,
    k: &CameraIntrinsics,
    solver: SolverKind,
) -> Option<(CardCandidate, TagPoseEstimate)> {
    let spec = registry.lookup_tag(obs.tag_id).ok()?;
    let est = estimate_tag_pose(k, spec, obs, solver).ok()?;
    let pose = est.pose.compose(&spec.tag_in_card().inverse());
    Some((
        CardCandidate {
            card: spec.card,
            pose,
            source_tag: obs.tag_id,
            weight: if est.ambiguous { AMBIGUOUS_WEIGHT } else { 1.0 },
            reprojection_error: est.reprojection_error,
        },
        est,
    ))
}

fn candidates_where(
    frame: &ObservationFrame,
    registry: &Registry,
    k: &CameraIntrinsics,
    solver: SolverKind,
    keep: impl Fn(Option<CardRef>) -> bool + Sync,
) -> CandidateBatch {
    let selected: Vec<_> = frame
        .observations
        .iter()
        .filter(|o| keep(registry.lookup_tag(o.tag_id).ok().map(|s| s.card)))
        .collect();
    let solved: Vec<Option<(CardCandidate, TagPoseEstimate)>> = if selected.len() >= PARALLEL_THRESHOLD {
        selected
            .par_iter()
            .map(|o| solve_one(o, registry, k, solver))
            .collect()
    } else {
        selected
            .iter()
            .map(|o| solve_one(o, registry, k, solver))
            .collect()
    };
    let mut batch = CandidateBatch::default();
    for s in solved {
        match s {
            Some((c, e)) => {
                batch.candidates.push(c);
                batch.tag_estimates.push(e);
            }
            None => batch.skipped += 1,
        }
    }
    batch
}

/// One candidate per usable observation. Unknown tags and failed solves are
/// counted, never fatal.
pub fn card_candidates(
    frame: &ObservationFrame,
    registry: &Registry,
    k: &CameraIntrinsics,
    solver: SolverKind,
) -> CandidateBatch {
    candidates_where(frame, registry, k, solver, |_| true)
}

/// Fuses each card's candidates; output is ordered by card.
pub fn fuse_by_card(
    candidates: &[CardCandidate],
    policy: FusionPolicy,
    timestamp: f64,
) -> Vec<CardPoseEstimate> {
    let mut groups: BTreeMap<CardRef, Vec<CardCandidate>> = BTreeMap::new();
    for c in candidates {
        groups.entry(c.card).or_default().push(*c);
    }
    groups
        .values()
        .map(|g| {
            let mut e = fuse_candidates(g, policy).expect("non-empty single-card group");
            e.timestamp = timestamp;
            e
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameResult {
    pub timestamp: f64,
    pub cards: Vec<CardPoseEstimate>,
    pub board: Option<CardPoseEstimate>,
    pub board_tags: Vec<TagPoseEstimate>,
    pub skipped: usize,
}

pub fn track_frame(
    lifecycle: &TrackerLifecycle,
    frame: &ObservationFrame,
    registry: &Registry,
    k: &CameraIntrinsics,
    solver: SolverKind,
) -> FrameResult {
    let cards_on = lifecycle.card_tracker_enabled;
    let table_on = lifecycle.table_tracker_enabled;
    let batch = candidates_where(frame, registry, k, solver, |card| match card {
        Some(CardRef::Board) => table_on,
        Some(CardRef::Deck { .. }) => cards_on,
        // Unknown ids are counted as skipped while anything is tracking.
        None => cards_on || table_on,
    });

    let (board_cands, card_cands): (Vec<_>, Vec<_>) = batch
        .candidates
        .iter()
        .partition(|c| c.card == CardRef::Board);
    let board_tags = batch
        .candidates
        .iter()
        .zip(&batch.tag_estimates)
        .filter(|(c, _)| c.card == CardRef::Board)
        .map(|(_, e)| *e)
        .collect();
    let board = fuse_by_card(&board_cands, FusionPolicy::RobustMean, frame.timestamp)
        .into_iter()
        .next();
    FrameResult {
        timestamp: frame.timestamp,
        cards: fuse_by_card(&card_cands, FusionPolicy::RobustMean, frame.timestamp),
        board,
        board_tags,
        skipped: batch.skipped,
    }
}

pub const CARD_POSE_HEADER: &str = "# cardtrack card-poses v1";

/// Card-pose trace: `<t> <card> <tx> <ty> <tz> <rx> <ry> <rz> <count> <error>`.
pub fn write_card_poses<W: Write>(estimates: &[CardPoseEstimate], mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "{CARD_POSE_HEADER}")?;
    for e in estimates {
        let t = e.pose.translation;
        let r = e.pose.rotation.to_rodrigues();
        writeln!(
            sink,
            "{} {} {} {} {} {} {} {} {} {}",
            e.timestamp, e.card, t.x, t.y, t.z, r.x, r.y, r.z, e.candidate_count, e.reprojection_error
        )?;
    }
    Ok(())
}

pub fn read_card_poses<R: BufRead>(source: R) -> Result<Vec<CardPoseEstimate>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: &str| TraceError::Format {
            line: n,
            message: m.to_string(),
        };
        if f.len() != 10 {
            return Err(bad("expected 10 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let card: CardRef = f[1].parse().map_err(|e: String| bad(&e))?;
        out.push(CardPoseEstimate {
            timestamp: num(f[0])?,
            card,
            pose: Pose::from_rodrigues(
                Vector3::new(num(f[5])?, num(f[6])?, num(f[7])?),
                Vector3::new(num(f[2])?, num(f[3])?, num(f[4])?),
            ),
            candidate_count: f[8].parse().map_err(|_| bad("bad candidate count"))?,
            reprojection_error: num(f[9])?,
        });
    }
    Ok(out)
}
