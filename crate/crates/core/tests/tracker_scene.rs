use std::collections::BTreeSet;

use nalgebra::{Point2, Vector2, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cardtrack::bench::synthetic_frame;
use cardtrack::geometry::{CameraIntrinsics, Pose, Rotation};
use cardtrack::observation::{read_trace, write_trace, ObservationFrame, TraceItem};
use cardtrack::player::PlayerId;
use cardtrack::pose::SolverKind;
use cardtrack::registry::{
    load_layout, save_layout, CardRef, Registry, RegistryError, Side, CARD_HEIGHT, CARD_WIDTH,
};
use cardtrack::scene::{
    frame_times, parse_scene_script, render_frame, script_scene, simulate_trace, CardPlacement, NoiseModel,
    SceneState,
};
use cardtrack::tracker::{
    card_candidates, fuse_candidates, jitter_metrics, read_card_poses, track_frame, write_card_poses, CardCandidate,
    FusionPolicy, TrackerLifecycle,
};

fn flat(heading: f64, tilt: f64) -> Rotation {
    Rotation::from_rodrigues(&Vector3::new(std::f64::consts::FRAC_PI_2 + tilt, 0.0, 0.0))
        .compose(&Rotation::from_rodrigues(&Vector3::new(0.0, heading, 0.0)))
}

/// Several cards from both decks, some showing their backs, plus the board.
fn busy_scene() -> SceneState {
    let mut cards = Vec::new();
    for i in 0..6u8 {
        let owner = if i % 2 == 0 { PlayerId::A } else { PlayerId::B };
        let x = -0.15 + 0.06 * i as f64;
        let mut rot = flat(0.3 * i as f64, 0.2 + 0.05 * i as f64);
        if i == 4 {
            rot = rot.compose(&Rotation::from_rodrigues(&Vector3::new(0.0, 0.0, std::f64::consts::PI)));
        }
        cards.push(CardPlacement {
            owner,
            card: 7 * i,
            pose: Pose::new(rot, Vector3::new(x, 0.03 * i as f64 - 0.05, 0.45 + 0.02 * i as f64)),
        });
    }
    SceneState {
        timestamp: 0.5,
        camera: Pose::identity(),
        cards,
        board: Some(Pose::new(flat(0.1, 0.6), Vector3::new(0.0, 0.12, 0.75))),
    }
}

#[test]
fn noise_free_render_then_track_recovers_every_pose() {
    let k = CameraIntrinsics::default();
    let registry = Registry::full(12);
    let scene = busy_scene();
    let frame = render_frame(&scene, &k, &registry, &NoiseModel::none());
    let result = track_frame(&TrackerLifecycle::default(), &frame, &registry, &k, SolverKind::Ippe);
    assert_eq!(result.cards.len(), scene.cards.len());
    for c in &scene.cards {
        let truth = scene.card_in_camera(c.owner, c.card).unwrap();
        let est = result
            .cards
            .iter()
            .find(|e| e.card == CardRef::Deck { owner: c.owner, card: c.card })
            .unwrap();
        let (r, t) = est.pose.distance(&truth);
        assert!(r < 1e-6 && t < 1e-6, "card {}: {r} {t}", c.card);
        assert!(est.candidate_count >= 1);
    }
    let board = result.board.unwrap();
    let (r, t) = board.pose.distance(&scene.board_in_camera().unwrap());
    assert!(r < 1e-6 && t < 1e-6);
    assert_eq!(result.skipped, 0);
}

#[test]
fn flipped_card_is_seen_through_its_back_tags() {
    let k = CameraIntrinsics::default();
    let registry = Registry::full(12);
    let scene = busy_scene();
    let frame = render_frame(&scene, &k, &registry, &NoiseModel::none());
    let flipped = CardRef::Deck { owner: PlayerId::A, card: 28 };
    let sides: BTreeSet<Side> = frame
        .observations
        .iter()
        .map(|o| registry.lookup_tag(o.tag_id).unwrap())
        .filter(|s| s.card == flipped)
        .map(|s| s.side)
        .collect();
    assert_eq!(sides, BTreeSet::from([Side::Back]));
}

#[test]
fn local_registry_skips_remote_tags() {
    let k = CameraIntrinsics::default();
    let full = Registry::full(12);
    let local = full.restrict_to(PlayerId::A).unwrap();
    let frame = render_frame(&busy_scene(), &k, &full, &NoiseModel::none());
    let result = track_frame(&TrackerLifecycle::default(), &frame, &local, &k, SolverKind::Ippe);
    assert!(result.cards.iter().all(|c| matches!(c.card, CardRef::Deck { owner: PlayerId::A, .. })));
    assert_eq!(result.cards.len(), 3);
    assert_eq!(result.skipped, 3 * 28);
}

#[test]
fn track_frame_is_pure_and_schedule_independent() {
    let k = CameraIntrinsics::default();
    let registry = Registry::full(1);
    // Large enough to take the parallel path.
    let frame = synthetic_frame(&registry, &k, 600, 3);
    let lc = TrackerLifecycle::default();
    let a = track_frame(&lc, &frame, &registry, &k, SolverKind::Ippe);
    let b = track_frame(&lc, &frame, &registry, &k, SolverKind::Ippe);
    assert_eq!(a, b);
    let mut shuffled = frame.clone();
    shuffled.observations.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let c = track_frame(&lc, &shuffled, &registry, &k, SolverKind::Ippe);
    assert_eq!(a.cards, c.cards);
}

fn candidates_for_one_card() -> Vec<CardCandidate> {
    let k = CameraIntrinsics::default();
    let registry = Registry::full(12);
    let noise = NoiseModel::gaussian(0.4, 9);
    let frame = render_frame(&busy_scene(), &k, &registry, &noise);
    let target = CardRef::Deck { owner: PlayerId::B, card: 7 };
    card_candidates(&frame, &registry, &k, SolverKind::Ippe)
        .candidates
        .into_iter()
        .filter(|c| c.card == target)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_ignores_candidate_order(seed in any::<u64>()) {
        let cands = candidates_for_one_card();
        prop_assert!(cands.len() > 10);
        let mut shuffled = cands.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for policy in [FusionPolicy::RobustMean, FusionPolicy::BestResidual] {
            let a = fuse_candidates(&cands, policy).unwrap();
            let b = fuse_candidates(&shuffled, policy).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn render_is_reproducible_and_conservative(seed in any::<u64>(), sigma in 0.0f64..2.0) {
        let k = CameraIntrinsics::default();
        let registry = Registry::full(12);
        let scene = busy_scene();
        let noise = NoiseModel { corner_sigma: sigma, hide_probability: 0.2, seed, ..NoiseModel::default() };
        let a = render_frame(&scene, &k, &registry, &noise);
        prop_assert_eq!(&a, &render_frame(&scene, &k, &registry, &noise));
        for o in &a.observations {
            let spec = registry.lookup_tag(o.tag_id).unwrap();
            let object = match spec.card {
                CardRef::Board => scene.board_in_camera().unwrap(),
                CardRef::Deck { owner, card } => scene.card_in_camera(owner, card).unwrap(),
            };
            for corner in spec.corners_in_card() {
                prop_assert!(object.transform_point(&corner).z > 0.0);
            }
        }
    }
}

#[test]
fn median_rejects_a_displaced_outlier() {
    let base = Pose::new(flat(0.2, 0.3), Vector3::new(0.01, 0.02, 0.5));
    let card = CardRef::Deck { owner: PlayerId::A, card: 3 };
    let mut cands: Vec<CardCandidate> = (0..27)
        .map(|i| CardCandidate { card, pose: base, source_tag: i, weight: 1.0, reprojection_error: 0.0 })
        .collect();
    let mut outlier = base;
    outlier.translation += Vector3::new(0.1, 0.0, 0.0);
    cands.push(CardCandidate { card, pose: outlier, source_tag: 27, weight: 1.0, reprojection_error: 0.0 });
    let fused = fuse_candidates(&cands, FusionPolicy::RobustMean).unwrap();
    assert!((fused.pose.translation - base.translation).norm() < 1e-9);
    assert_eq!(fused.candidate_count, 28);
}

#[test]
fn fusion_rejects_empty_and_mixed_sets() {
    assert!(fuse_candidates(&[], FusionPolicy::RobustMean).is_err());
    let pose = Pose::identity();
    let a = CardCandidate {
        card: CardRef::Board,
        pose,
        source_tag: 1,
        weight: 1.0,
        reprojection_error: 0.0,
    };
    let b = CardCandidate { card: CardRef::Deck { owner: PlayerId::B, card: 0 }, ..a };
    assert!(fuse_candidates(&[a, b], FusionPolicy::RobustMean).is_err());
}

#[test]
fn registry_geometry_invariants() {
    let reg = Registry::full(8);
    let half_diag = 0.5 * (CARD_WIDTH * CARD_WIDTH + CARD_HEIGHT * CARD_HEIGHT).sqrt();
    for t in reg.tags() {
        // Tag center plus offset lands on the card center.
        let center = t.corners_in_card().iter().fold(Vector3::zeros(), |a, p| a + p.coords) / 4.0;
        let c = Vector2::new(center.x, center.z) + t.offset;
        assert!(c.norm() < 1e-15, "tag {}", t.tag_id);
        match t.card {
            CardRef::Board => assert_eq!(t.side, Side::Front),
            CardRef::Deck { .. } => assert!(t.offset.norm() <= half_diag),
        }
    }
    // Footprints on each face are pairwise disjoint.
    for card in 0..52u8 {
        for side in [Side::Front, Side::Back] {
            let quads: Vec<[Point2<f64>; 4]> = reg
                .tags_on(CardRef::Deck { owner: PlayerId::B, card })
                .filter(|t| t.side == side)
                .map(|t| t.corners_in_card().map(|p| Point2::new(p.x, p.z)))
                .collect();
            assert_eq!(quads.len(), 28);
            for i in 0..quads.len() {
                for j in i + 1..quads.len() {
                    assert!(!overlap(&quads[i], &quads[j]), "card {card} {side:?} tags {i} {j}");
                }
            }
        }
    }
}

/// Separating-axis test for two convex quads; touching edges count as disjoint.
fn overlap(a: &[Point2<f64>; 4], b: &[Point2<f64>; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let e = poly[(i + 1) % 4] - poly[i];
            let axis = Vector2::new(-e.y, e.x);
            let span = |q: &[Point2<f64>; 4]| {
                q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = axis.dot(&p.coords);
                    (lo.min(d), hi.max(d))
                })
            };
            let (a0, a1) = span(a);
            let (b0, b1) = span(b);
            if a1 <= b0 + 1e-12 || b1 <= a0 + 1e-12 {
                return false;
            }
        }
    }
    true
}

#[test]
fn layout_with_a_missing_tag_is_rejected() {
    let mut text = Vec::new();
    save_layout(&Registry::local(0, PlayerId::A), &mut text).unwrap();
    let text = String::from_utf8(text).unwrap();
    let pruned: String = text
        .lines()
        .filter(|l| !l.starts_with("13 "))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(matches!(
        load_layout(pruned.as_bytes()),
        Err(RegistryError::SchemaViolation { .. })
    ));
    let dup = format!("{text}{}\n", text.lines().find(|l| l.starts_with("13 ")).unwrap());
    assert!(load_layout(dup.as_bytes()).is_err());
}

#[test]
fn scripted_trace_round_trips_through_text() {
    let script = "fps 30\ncamera 0 0 0 0 0 0 0\ncard:b:9 0 0 0 0.4 1.8 0 0\ncard:b:9 1 0.02 0 0.42 1.8 0.2 0\nevent 0.5 first-card-pickup\n";
    let script = parse_scene_script(script.as_bytes()).unwrap();
    assert_eq!(frame_times(&script).len(), 31);
    assert_eq!(script_scene(&script).len(), 31);
    let k = CameraIntrinsics::default();
    let registry = Registry::full(4);
    let items = simulate_trace(&script, &k, &registry, &NoiseModel::gaussian(0.3, 2));
    let mut text = Vec::new();
    write_trace(&items, &mut text).unwrap();
    let back = read_trace(text.as_slice()).unwrap();
    assert_eq!(back.len(), items.len());
    for (a, b) in items.iter().zip(&back) {
        match (a, b) {
            (TraceItem::Frame(x), TraceItem::Frame(y)) => {
                assert_eq!(x.timestamp, y.timestamp);
                assert_eq!(x.observations, y.observations);
            }
            (x, y) => assert_eq!(x, y),
        }
    }
}

#[test]
fn card_pose_file_round_trip_and_jitter() {
    let k = CameraIntrinsics::default();
    let registry = Registry::full(4);
    let mut scene = busy_scene();
    let mut history = Vec::new();
    for i in 0..20 {
        scene.timestamp = i as f64 / 30.0;
        let f: ObservationFrame = render_frame(&scene, &k, &registry, &NoiseModel::gaussian(0.2, 3));
        history.extend(track_frame(&TrackerLifecycle::default(), &f, &registry, &k, SolverKind::Ippe).cards);
    }
    let mut text = Vec::new();
    write_card_poses(&history, &mut text).unwrap();
    let back = read_card_poses(text.as_slice()).unwrap();
    assert_eq!(back.len(), history.len());
    for (a, b) in back.iter().zip(&history) {
        assert_eq!((a.card, a.candidate_count, a.timestamp), (b.card, b.candidate_count, b.timestamp));
        let (r, t) = a.pose.distance(&b.pose);
        assert!(r < 1e-12 && t == 0.0);
    }
    let report = jitter_metrics(&history, 10).unwrap();
    assert_eq!(report.cards.len(), 6);
    assert!(report.cards.iter().all(|c| c.samples == 10 && c.rotational_sigma_deg.is_finite()));
    assert!(jitter_metrics(&history, 1).is_err());
}
