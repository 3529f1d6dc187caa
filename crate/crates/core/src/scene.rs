//! Ground-truth scenes and the projection oracle that renders them into tag
//! observations.
//!
//! Scene scripts are line records:
//!
//! ```text
//! fps 30
//! image 1920 1080
//! camera <t> <px> <py> <pz> <rx> <ry> <rz>
//! board <t> <px> <py> <pz> <rx> <ry> <rz>
//! card:<owner>:<card> <t> <px> <py> <pz> <rx> <ry> <rz>
//! event <t> <session-start|first-card-pickup|board-removed>
//! ```
//!
//! Keyframe poses are entity-in-world; the camera keyframe is the camera's
//! pose in the world. Poses are interpolated linearly (slerp for rotation)
//! between keyframes and held outside them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{project_point, CameraIntrinsics, Pixel, Pose, Rotation};
use crate::observation::{ObservationFrame, TagObservation, TraceItem};
use crate::player::PlayerId;
use crate::registry::{CardRef, Registry, TagSpec, CARDS_PER_DECK};
use crate::tracker::LifecycleEvent;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl Default for ImageSize {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardPlacement {
    pub owner: PlayerId,
    pub card: u8,
    /// Card frame in the world frame.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneState {
    pub timestamp: f64,
    /// World frame in the camera frame.
    pub camera: Pose,
    pub cards: Vec<CardPlacement>,
    /// Board frame in the world frame.
    pub board: Option<Pose>,
}

impl SceneState {
    /// Ground-truth card pose in the camera frame.
    pub fn card_in_camera(&self, owner: PlayerId, card: u8) -> Option<Pose> {
        self.cards
            .iter()
            .find(|c| c.owner == owner && c.card == card)
            .map(|c| self.camera.compose(&c.pose))
    }

    pub fn board_in_camera(&self) -> Option<Pose> {
        self.board.map(|b| self.camera.compose(&b))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseModel {
    /// Per-coordinate Gaussian corner noise (px).
    pub corner_sigma: f64,
    pub hidden: BTreeSet<u32>,
    pub hide_probability: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(corner_sigma: f64, seed: u64) -> Self {
        Self {
            corner_sigma,
            seed,
            ..Self::default()
        }
    }
}

/// Projects a tag given its pose in the camera frame. `None` when the tag
/// faces away, any corner has Z <= 0, or any corner leaves the image.
pub fn project_tag(
    k: &CameraIntrinsics,
    tag_in_camera: &Pose,
    side: f64,
    image: ImageSize,
) -> Option<[Pixel; 4]> {
    let normal_axis = tag_in_camera.rotation.matrix().column(1).into_owned();
    if normal_axis.dot(&tag_in_camera.translation) <= 0.0 {
        return None;
    }
    let model = crate::geometry::canonical_tag_corners(side);
    let mut out = [Pixel::origin(); 4];
    for (o, m) in out.iter_mut().zip(&model) {
        let p = project_point(k, &tag_in_camera.transform_point(m)).ok()?;
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < image.width as f64 && p.y < image.height as f64) {
            return None;
        }
        *o = p;
    }
    Some(out)
}

fn frame_rng(seed: u64, timestamp: f64) -> ChaCha8Rng {
    let mix = timestamp.to_bits().wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(seed ^ mix)
}

pub fn render_frame(
    scene: &SceneState,
    k: &CameraIntrinsics,
    registry: &Registry,
    noise: &NoiseModel,
) -> ObservationFrame {
    render_frame_sized(scene, k, registry, noise, ImageSize::default())
}

pub fn render_frame_sized(
    scene: &SceneState,
    k: &CameraIntrinsics,
    registry: &Registry,
    noise: &NoiseModel,
    image: ImageSize,
) -> ObservationFrame {
    let mut visible: Vec<TagObservation> = Vec::new();
    let mut emit = |spec: &TagSpec, object_in_camera: &Pose| {
        let pose = object_in_camera.compose(&spec.tag_in_card());
        if let Some(corners) = project_tag(k, &pose, spec.size_class.side_length(), image) {
            visible.push(TagObservation {
                tag_id: spec.tag_id,
                corners,
            });
        }
    };
    for c in &scene.cards {
        let Some(deck) = registry.deck(c.owner) else {
            continue;
        };
        let card_in_camera = scene.camera.compose(&c.pose);
        let per_card = deck.tags.len() / CARDS_PER_DECK;
        let start = c.card as usize * per_card;
        for spec in deck.tags.iter().skip(start).take(per_card) {
            debug_assert_eq!(spec.card, CardRef::Deck { owner: c.owner, card: c.card });
            emit(spec, &card_in_camera);
        }
    }
    if let (Some(board), Some(layout)) = (scene.board, registry.board()) {
        let board_in_camera = scene.camera.compose(&board);
        for spec in &layout.tags {
            emit(spec, &board_in_camera);
        }
    }
    visible.sort_by_key(|o| o.tag_id);
    visible.dedup_by_key(|o| o.tag_id);

    let mut rng = frame_rng(noise.seed, scene.timestamp);
    let normal = Normal::new(0.0, noise.corner_sigma.max(0.0)).expect("finite sigma");
    let mut observations = Vec::with_capacity(visible.len());
    for mut o in visible {
        if noise.hidden.contains(&o.tag_id) {
            continue;
        }
        if noise.hide_probability > 0.0 && rng.random::<f64>() < noise.hide_probability {
            continue;
        }
        if noise.corner_sigma > 0.0 {
            for c in o.corners.iter_mut() {
                c.x += normal.sample(&mut rng);
                c.y += normal.sample(&mut rng);
            }
        }
        observations.push(o);
    }
    ObservationFrame {
        timestamp: scene.timestamp,
        observations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Entity {
    Camera,
    Board,
    Card { owner: PlayerId, card: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneScript {
    pub fps: f64,
    pub image: ImageSize,
    /// Keyframes per entity, sorted by time.
    pub keyframes: BTreeMap<Entity, Vec<(f64, Pose)>>,
    pub events: Vec<(f64, LifecycleEvent)>,
}

impl Default for SceneScript {
    fn default() -> Self {
        Self {
            fps: 30.0,
            image: ImageSize::default(),
            keyframes: BTreeMap::new(),
            events: Vec::new(),
        }
    }
}

fn parse_entity(s: &str) -> Option<Entity> {
    match s {
        "camera" => Some(Entity::Camera),
        "board" => Some(Entity::Board),
        _ => match s.strip_prefix("card:")?.parse::<CardRef>().ok()? {
            CardRef::Deck { owner, card } => Some(Entity::Card { owner, card }),
            CardRef::Board => None,
        },
    }
}

pub fn parse_scene_script<R: BufRead>(source: R) -> Result<SceneScript, SceneError> {
    let mut script = SceneScript::default();
    for (i, line) in source.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| SceneError::Io(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| SceneError::SchemaViolation { line: n, message: m };
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| -> Result<f64, SceneError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad number '{s}'")))
        };
        match f[0] {
            "fps" => {
                if f.len() != 2 {
                    return Err(bad("expected 'fps <rate>'".into()));
                }
                let fps = num(f[1])?;
                if fps <= 0.0 {
                    return Err(bad("fps must be positive".into()));
                }
                script.fps = fps;
            }
            "image" => {
                let dims: Option<Vec<u32>> = f[1..].iter().map(|s| s.parse().ok()).collect();
                match dims.as_deref() {
                    Some(&[w, h]) if w > 0 && h > 0 => script.image = ImageSize { width: w, height: h },
                    _ => return Err(bad("expected 'image <width> <height>'".into())),
                }
            }
            "event" => {
                if f.len() != 3 {
                    return Err(bad("expected 'event <t> <kind>'".into()));
                }
                let t = num(f[1])?;
                let e: LifecycleEvent = f[2].parse().map_err(bad)?;
                script.events.push((t, e));
            }
            name => {
                let entity = parse_entity(name).ok_or_else(|| bad(format!("unknown entity '{name}'")))?;
                if f.len() != 8 {
                    return Err(bad(format!("expected 8 fields, found {}", f.len())));
                }
                let v: Vec<f64> = f[1..].iter().map(|s| num(s)).collect::<Result<_, _>>()?;
                let pose = Pose::from_rodrigues(
                    Vector3::new(v[4], v[5], v[6]),
                    Vector3::new(v[1], v[2], v[3]),
                );
                let frames = script.keyframes.entry(entity).or_default();
                if frames.iter().any(|(t, _)| *t == v[0]) {
                    return Err(bad(format!("duplicate keyframe at t={}", v[0])));
                }
                frames.push((v[0], pose));
                frames.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
    }
    script.events.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(script)
}

fn quaternion(r: &Rotation) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r.matrix()))
}

/// Linear interpolation of translation and slerp of rotation, `s` in [0, 1].
pub fn interpolate_pose(a: &Pose, b: &Pose, s: f64) -> Pose {
    if a == b {
        return *a;
    }
    let qa = quaternion(&a.rotation);
    let qb = quaternion(&b.rotation);
    let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(if s < 0.5 { qa } else { qb });
    let rotation = Rotation::nearest(q.to_rotation_matrix().matrix());
    Pose::new(rotation, a.translation.lerp(&b.translation, s))
}

fn sample_track(frames: &[(f64, Pose)], t: f64) -> Pose {
    let first = frames[0];
    if t <= first.0 {
        return first.1;
    }
    for w in frames.windows(2) {
        let (t0, p0) = w[0];
        let (t1, p1) = w[1];
        if t <= t1 {
            return interpolate_pose(&p0, &p1, (t - t0) / (t1 - t0));
        }
    }
    frames[frames.len() - 1].1
}

/// Frame times cover the keyframed span at the script frame rate, both ends
/// included.
pub fn frame_times(script: &SceneScript) -> Vec<f64> {
    let times = script.keyframes.values().flatten().map(|(t, _)| *t);
    let (Some(lo), Some(hi)) = (
        times.clone().min_by(f64::total_cmp),
        times.max_by(f64::total_cmp),
    ) else {
        return Vec::new();
    };
    let count = ((hi - lo) * script.fps + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 / script.fps).collect()
}

pub fn script_scene(script: &SceneScript) -> Vec<SceneState> {
    frame_times(script)
        .into_iter()
        .map(|t| {
            let mut state = SceneState {
                timestamp: t,
                ..SceneState::default()
            };
            for (entity, frames) in &script.keyframes {
                let pose = sample_track(frames, t);
                match *entity {
                    Entity::Camera => state.camera = pose.inverse(),
                    Entity::Board => state.board = Some(pose),
                    Entity::Card { owner, card } => state.cards.push(CardPlacement { owner, card, pose }),
                }
            }
            state
        })
        .collect()
}

/// Renders a script into an observation trace, with lifecycle events placed
/// before the first frame at or after their time.
pub fn simulate_trace(
    script: &SceneScript,
    k: &CameraIntrinsics,
    registry: &Registry,
    noise: &NoiseModel,
) -> Vec<TraceItem> {
    let mut items = Vec::new();
    let mut events = script.events.iter().peekable();
    for state in script_scene(script) {
        while let Some(&&(time, event)) = events.peek() {
            if time > state.timestamp {
                break;
            }
            items.push(TraceItem::Event { time, event });
            events.next();
        }
        items.push(TraceItem::Frame(render_frame_sized(&state, k, registry, noise, script.image)));
    }
    items.extend(events.map(|&(time, event)| TraceItem::Event { time, event }));
    items
}
