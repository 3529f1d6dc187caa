//! One-shot table and deck calibration from a single frame showing the
//! marker board and the top card of the local deck.
//!
//! Calibration file:
//!
//! ```text
//! # cardtrack calibration v1
//! plane <nx> <ny> <nz> <offset>
//! plane_origin <x> <y> <z>
//! plane_axes <ux> <uy> <uz> <wx> <wy> <wz>
//! plane_residual <rms>
//! deck_card <owner>:<card>
//! anchor <u> <w> <heading>
//! deck_pose <tx> <ty> <tz> <rx> <ry> <rz>
//! extrinsic <tx> <ty> <tz> <rx> <ry> <rz>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, ModelPoint, Pixel, Pose, Rotation};
use crate::observation::ObservationFrame;
use crate::pose::{estimate_tag_pose, refine_points, LmConfig, SolverKind, TagPoseEstimate};
use crate::registry::{BoardLayout, CardRef, Registry};
use crate::tracker::{card_candidates, fuse_candidates, FusionPolicy};

pub const CALIBRATION_HEADER: &str = "# cardtrack calibration v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("need at least 3 board tags, got {0}")]
    InsufficientTags(usize),
    #[error("board tag centers are collinear")]
    DegenerateGeometry,
    #[error("calibration board is not visible")]
    BoardNotVisible,
    #[error("no card of the local deck is visible")]
    DeckNotVisible,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Table plane `normal · x + offset = 0`, with the normal pointing toward
/// the observer so that `offset` is the observer's height above the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TablePlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Board center on the plane.
    pub origin: Point3<f64>,
    /// In-plane axes following the board's U and W directions.
    pub u_axis: Vector3<f64>,
    pub w_axis: Vector3<f64>,
    /// RMS distance of the fitted tag centers from the plane.
    pub residual_rms: f64,
}

impl TablePlane {
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    pub fn project_point(&self, p: &Point3<f64>) -> Point3<f64> {
        p - self.normal * self.signed_distance(p)
    }

    /// In-plane (u, w) coordinates of a point.
    pub fn plane_coords(&self, p: &Point3<f64>) -> (f64, f64) {
        let d = p - self.origin;
        (d.dot(&self.u_axis), d.dot(&self.w_axis))
    }

    pub fn point_at(&self, u: f64, w: f64) -> Point3<f64> {
        self.origin + self.u_axis * u + self.w_axis * w
    }

    /// Heading of a card about the plane normal, measured from `u_axis`.
    pub fn heading_of(&self, pose: &Pose) -> f64 {
        let u = pose.rotation.matrix().column(0).into_owned();
        u.dot(&self.w_axis).atan2(u.dot(&self.u_axis))
    }

    /// The plane expressed in another frame, `frame` mapping this plane's
    /// frame into it.
    pub fn transformed(&self, frame: &Pose) -> TablePlane {
        let normal = frame.rotation.rotate(&self.normal);
        let origin = frame.transform_point(&self.origin);
        TablePlane {
            normal,
            offset: -normal.dot(&origin.coords),
            origin,
            u_axis: frame.rotation.rotate(&self.u_axis),
            w_axis: frame.rotation.rotate(&self.w_axis),
            residual_rms: self.residual_rms,
        }
    }
}

/// Least-squares plane through the board tag centers, given in the
/// observer's frame (observer at the origin).
pub fn fit_table_plane(
    board_estimates: &[TagPoseEstimate],
    board_layout: &BoardLayout,
) -> Result<TablePlane, CalibrationError> {
    let layout: BTreeMap<u32, _> = board_layout
        .tags
        .iter()
        .map(|t| (t.tag_id, t.center_in_card()))
        .collect();
    // Sorted by id so the result does not depend on input order.
    let mut pairs: Vec<(u32, Vector3<f64>, nalgebra::Vector2<f64>)> = board_estimates
        .iter()
        .filter_map(|e| layout.get(&e.tag_id).map(|c| (e.tag_id, e.pose.translation, *c)))
        .collect();
    pairs.sort_by_key(|p| p.0);
    pairs.dedup_by_key(|p| p.0);
    if pairs.len() < 3 {
        return Err(CalibrationError::InsufficientTags(pairs.len()));
    }
    let n = pairs.len() as f64;
    let centroid = pairs.iter().fold(Vector3::zeros(), |a, p| a + p.1) / n;
    let mut cov = Matrix3::zeros();
    for p in &pairs {
        let d = p.1 - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (small, mid, large) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    if !(large > 0.0) || mid <= 1e-12 * large {
        return Err(CalibrationError::DegenerateGeometry);
    }
    let mut normal = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if normal.dot(&centroid) > 0.0 {
        normal = -normal;
    }
    let offset = -normal.dot(&centroid);
    let residual_rms = (small.max(0.0) / n).sqrt();

    // In-plane basis, then the 2D rotation that best maps the layout onto it.
    let seed = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (seed - normal * normal.dot(&seed)).normalize();
    let e2 = normal.cross(&e1);
    let layout_mean = pairs.iter().fold(nalgebra::Vector2::zeros(), |a, p| a + p.2) / n;
    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    for p in &pairs {
        let d = p.1 - centroid;
        let (x, y) = (d.dot(&e1), d.dot(&e2));
        let l = p.2 - layout_mean;
        cos_sum += l.x * x + l.y * y;
        sin_sum += l.x * y - l.y * x;
    }
    let theta = sin_sum.atan2(cos_sum);
    let u_axis = e1 * theta.cos() + e2 * theta.sin();
    let w_axis = normal.cross(&u_axis);
    let origin = Point3::from(centroid - u_axis * layout_mean.x - w_axis * layout_mean.y);
    Ok(TablePlane {
        normal,
        offset,
        origin,
        u_axis,
        w_axis,
        residual_rms,
    })
}

/// Moves a card pose onto the plane: the translation is projected
/// orthogonally and the card is laid flat, face up or down whichever is
/// closer, keeping its heading.
pub fn project_to_plane(pose: &Pose, plane: &TablePlane) -> Pose {
    let t = pose.translation - plane.normal * plane.signed_distance(&Point3::from(pose.translation));
    let r = pose.rotation.matrix();
    let v_now = r.column(1).into_owned();
    // A face-up card shows its front (-V) to the observer.
    let v = if v_now.dot(&plane.normal) > 0.0 {
        plane.normal
    } else {
        -plane.normal
    };
    let u_now = r.column(0).into_owned();
    let mut u = u_now - v * u_now.dot(&v);
    if u.norm() < 1e-9 {
        // Card standing on edge with U along the normal: take heading from W.
        let w_now = r.column(2).into_owned();
        let w = (w_now - v * w_now.dot(&v)).normalize();
        u = v.cross(&w);
    }
    let u = u.normalize();
    let w = u.cross(&v);
    let rotation = Rotation::nearest(&Matrix3::from_columns(&[u, v, w]));
    Pose::new(rotation, t)
}

/// In-plane deck anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeckAnchor {
    pub card: CardRef,
    pub u: f64,
    pub w: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneCalibration {
    /// Table plane in the headset frame.
    pub table: TablePlane,
    pub deck_anchor: DeckAnchor,
    /// Deck card pose on the table, in the headset frame.
    pub deck_pose: Pose,
    /// Camera frame in the headset frame.
    pub extrinsic: Pose,
}

impl SceneCalibration {
    pub fn anchor_residual(&self) -> f64 {
        self.table
            .signed_distance(&Point3::from(self.deck_pose.translation))
    }
}

/// Joint pose of every visible tag of one object, refined over all of their
/// corners. Returns the object pose in the camera frame and how many tags
/// contributed.
pub fn object_pose(
    frame: &ObservationFrame,
    registry: &Registry,
    k: &CameraIntrinsics,
    object: CardRef,
) -> Option<(Pose, usize)> {
    let mut model: Vec<ModelPoint> = Vec::new();
    let mut pixels: Vec<Pixel> = Vec::new();
    let mut obs_sorted: Vec<_> = frame
        .observations
        .iter()
        .filter(|o| registry.lookup_tag(o.tag_id).is_ok_and(|s| s.card == object))
        .collect();
    obs_sorted.sort_by_key(|o| o.tag_id);
    obs_sorted.dedup_by_key(|o| o.tag_id);
    let subframe = ObservationFrame {
        timestamp: frame.timestamp,
        observations: obs_sorted.iter().map(|o| **o).collect(),
    };
    let batch = card_candidates(&subframe, registry, k, SolverKind::Ippe);
    if batch.candidates.is_empty() {
        return None;
    }
    let init = fuse_candidates(&batch.candidates, FusionPolicy::RobustMean).ok()?.pose;
    for o in &obs_sorted {
        let spec = registry.lookup_tag(o.tag_id).ok()?;
        model.extend(spec.corners_in_card());
        pixels.extend(o.corners);
    }
    let refined = refine_points(k, &model, &pixels, &init, &LmConfig::default()).ok()?;
    Some((refined.pose, batch.candidates.len()))
}

/// Board tag poses implied by a jointly estimated board pose.
fn board_tag_estimates(
    frame: &ObservationFrame,
    registry: &Registry,
    k: &CameraIntrinsics,
) -> Vec<TagPoseEstimate> {
    let Some((board, _)) = object_pose(frame, registry, k, CardRef::Board) else {
        return Vec::new();
    };
    frame
        .observations
        .iter()
        .filter_map(|o| {
            let spec = registry.lookup_tag(o.tag_id).ok()?;
            if spec.card != CardRef::Board {
                return None;
            }
            let pose = board.compose(&spec.tag_in_card());
            let reprojection_error = crate::geometry::reprojection_error(
                k,
                &pose,
                &crate::geometry::canonical_tag_corners(spec.size_class.side_length()),
                &o.corners,
            )
            .ok()?;
            Some(TagPoseEstimate {
                tag_id: o.tag_id,
                pose,
                reprojection_error,
                ambiguous: false,
            })
        })
        .collect()
}

/// Independent per-tag board estimates (no joint refinement).
pub fn board_tag_estimates_per_tag(
    frame: &ObservationFrame,
    registry: &Registry,
    k: &CameraIntrinsics,
) -> Vec<TagPoseEstimate> {
    frame
        .observations
        .iter()
        .filter_map(|o| {
            let spec = registry.lookup_tag(o.tag_id).ok()?;
            (spec.card == CardRef::Board)
                .then(|| estimate_tag_pose(k, spec, o, SolverKind::Ippe).ok())
                .flatten()
        })
        .collect()
}

pub fn calibrate_scene(
    frame: &ObservationFrame,
    registry: &Registry,
    k: &CameraIntrinsics,
    extrinsic: &Pose,
) -> Result<SceneCalibration, CalibrationError> {
    let layout = registry.board().ok_or(CalibrationError::BoardNotVisible)?;
    let board_tags = board_tag_estimates(frame, registry, k);
    if board_tags.len() < 3 {
        return Err(CalibrationError::BoardNotVisible);
    }
    let plane_cam = fit_table_plane(&board_tags, layout)?;

    // The top card of the deck is the deck card with the most visible tags.
    let mut counts: BTreeMap<CardRef, usize> = BTreeMap::new();
    for o in &frame.observations {
        if let Ok(spec) = registry.lookup_tag(o.tag_id) {
            if spec.card != CardRef::Board {
                *counts.entry(spec.card).or_default() += 1;
            }
        }
    }
    let deck_card = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(c, _)| *c)
        .ok_or(CalibrationError::DeckNotVisible)?;
    let (deck_cam, _) =
        object_pose(frame, registry, k, deck_card).ok_or(CalibrationError::DeckNotVisible)?;

    let table = plane_cam.transformed(extrinsic);
    let deck_pose = project_to_plane(&extrinsic.compose(&deck_cam), &table);
    let (u, w) = table.plane_coords(&Point3::from(deck_pose.translation));
    Ok(SceneCalibration {
        table,
        deck_anchor: DeckAnchor {
            card: deck_card,
            u,
            w,
            heading: table.heading_of(&deck_pose),
        },
        deck_pose,
        extrinsic: *extrinsic,
    })
}

fn pose_fields(p: &Pose) -> String {
    let t = p.translation;
    let r = p.rotation.to_rodrigues();
    format!("{} {} {} {} {} {}", t.x, t.y, t.z, r.x, r.y, r.z)
}

pub fn save_calibration<W: Write>(c: &SceneCalibration, mut sink: W) -> std::io::Result<()> {
    let p = &c.table;
    writeln!(sink, "{CALIBRATION_HEADER}")?;
    writeln!(sink, "plane {} {} {} {}", p.normal.x, p.normal.y, p.normal.z, p.offset)?;
    writeln!(sink, "plane_origin {} {} {}", p.origin.x, p.origin.y, p.origin.z)?;
    writeln!(
        sink,
        "plane_axes {} {} {} {} {} {}",
        p.u_axis.x, p.u_axis.y, p.u_axis.z, p.w_axis.x, p.w_axis.y, p.w_axis.z
    )?;
    writeln!(sink, "plane_residual {}", p.residual_rms)?;
    writeln!(sink, "deck_card {}", c.deck_anchor.card)?;
    writeln!(
        sink,
        "anchor {} {} {}",
        c.deck_anchor.u, c.deck_anchor.w, c.deck_anchor.heading
    )?;
    writeln!(sink, "deck_pose {}", pose_fields(&c.deck_pose))?;
    writeln!(sink, "extrinsic {}", pose_fields(&c.extrinsic))?;
    sink.flush()
}

pub fn load_calibration<R: BufRead>(source: R) -> Result<SceneCalibration, CalibrationError> {
    let mut records: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
    let mut header = false;
    for (i, line) in source.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| CalibrationError::Io(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !header {
            if line != CALIBRATION_HEADER {
                return Err(CalibrationError::Format {
                    line: n,
                    message: format!("expected header '{CALIBRATION_HEADER}'"),
                });
            }
            header = true;
            continue;
        }
        let mut f = line.split_whitespace().map(str::to_string);
        let key = f.next().unwrap_or_default();
        records.insert(key, (n, f.collect()));
    }
    let get = |key: &str, count: usize| -> Result<Vec<f64>, CalibrationError> {
        let (line, fields) = records.get(key).ok_or_else(|| CalibrationError::Format {
            line: 0,
            message: format!("missing '{key}' record"),
        })?;
        let bad = |m: String| CalibrationError::Format { line: *line, message: m };
        if fields.len() != count {
            return Err(bad(format!("'{key}' expects {count} values")));
        }
        fields
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'"))))
            .collect()
    };
    let pose = |v: Vec<f64>| Pose::from_rodrigues(Vector3::new(v[3], v[4], v[5]), Vector3::new(v[0], v[1], v[2]));
    let plane = get("plane", 4)?;
    let origin = get("plane_origin", 3)?;
    let axes = get("plane_axes", 6)?;
    let residual = get("plane_residual", 1)?;
    let anchor = get("anchor", 3)?;
    let card = match records.get("deck_card") {
        Some((line, f)) if f.len() == 1 => f[0].parse::<CardRef>().map_err(|m| CalibrationError::Format {
            line: *line,
            message: m,
        })?,
        _ => {
            return Err(CalibrationError::Format {
                line: 0,
                message: "missing 'deck_card' record".into(),
            })
        }
    };
    Ok(SceneCalibration {
        table: TablePlane {
            normal: Vector3::new(plane[0], plane[1], plane[2]),
            offset: plane[3],
            origin: Point3::new(origin[0], origin[1], origin[2]),
            u_axis: Vector3::new(axes[0], axes[1], axes[2]),
            w_axis: Vector3::new(axes[3], axes[4], axes[5]),
            residual_rms: residual[0],
        },
        deck_anchor: DeckAnchor {
            card,
            u: anchor[0],
            w: anchor[1],
            heading: anchor[2],
        },
        deck_pose: pose(get("deck_pose", 6)?),
        extrinsic: pose(get("extrinsic", 6)?),
    })
}
