use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cardtrack::game::{
    merge_traces, new_game, replay, scripted_war, CardState, Effect, HandEvent, HandEventKind, HandTarget, PileId,
};
use cardtrack::player::PlayerId;
use cardtrack::sync::{
    decode_message, encode_message, simulate_session, ChannelConfig, Payload, SessionConfig, SyncError, SyncMessage,
    TranscriptRecord,
};

mod common;
use common::random_trace;

fn random_message(rng: &mut ChaCha8Rng) -> SyncMessage {
    let sender = if rng.random_bool(0.5) { PlayerId::A } else { PlayerId::B };
    let payload = match rng.random_range(0..4) {
        0 => {
            let trace = random_trace(rng.random(), sender, 1, 1.0);
            Payload::HandEvent {
                event: trace[0],
                origin_seq: if rng.random_bool(0.5) { Some(rng.random()) } else { None },
            }
        }
        1 => Payload::CalibrationAnchor {
            player: sender,
            u: rng.random_range(-1.0..1.0),
            w: rng.random_range(-1.0..1.0),
            heading: rng.random_range(-3.0..3.0),
        },
        2 => Payload::StateDigest { applied: rng.random(), digest: rng.random() },
        _ => Payload::Ack { seq: rng.random() },
    };
    SyncMessage { seq: rng.random(), sender, send_time: rng.random_range(0.0..1e4), payload }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codec_round_trips(seed in any::<u64>()) {
        let m = random_message(&mut ChaCha8Rng::seed_from_u64(seed));
        let bytes = encode_message(&m);
        prop_assert_eq!(decode_message(&bytes).unwrap(), m);
        for cut in 0..bytes.len() {
            let is_malformed = matches!(decode_message(&bytes[..cut]), Err(SyncError::MalformedFrame { .. }));
            prop_assert!(is_malformed);
        }
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(decode_message(&longer).is_err());
    }

    #[test]
    fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..96)) {
        let _ = decode_message(&bytes);
    }

    #[test]
    fn replicas_converge_on_random_traces(
        seed in any::<u64>(),
        latency in 0.0f64..1.5,
        drop in 0.0f64..0.5,
        channel_seed in any::<u64>(),
    ) {
        let a = random_trace(seed, PlayerId::A, 120, 0.7);
        let b = random_trace(seed ^ 0x55, PlayerId::B, 120, 0.7);
        let config = SessionConfig {
            game_seed: seed,
            channel: ChannelConfig { latency, drop_probability: drop, seed: channel_seed, reliable: true },
            ..SessionConfig::default()
        };
        let r = simulate_session(&a, &b, &config);
        prop_assert!(r.converged && !r.divergence_detected);
        prop_assert_eq!(r.replicas[0].canonical_dump(), r.replicas[1].canonical_dump());
        prop_assert!(r.replicas[0].check_invariants().is_ok());

        // A remote pickup shows up no earlier than one latency after it happened.
        for rec in &r.transcript {
            if let TranscriptRecord::Apply { time, peer, confirmed: true, event, effects: Ok(effects) } = rec {
                let picked = effects.iter().any(|e| matches!(e, Effect::PickedUp { player, .. } if *player != *peer));
                if picked && *peer == PlayerId::B {
                    prop_assert!(*time + 1e-9 >= event.time + latency);
                }
                if picked {
                    prop_assert!(*time + 1e-9 >= event.time);
                }
            }
        }
    }
}

#[test]
fn zero_latency_session_matches_single_machine_replay() {
    let (a, b) = scripted_war();
    let config = SessionConfig {
        game_seed: 8,
        channel: ChannelConfig { latency: 0.0, ..ChannelConfig::default() },
        ..SessionConfig::default()
    };
    let r = simulate_session(&a, &b, &config);
    let (local, _) = replay(8, &merge_traces(&a, &b)).unwrap();
    assert_eq!(r.replicas[0].canonical_dump(), local.canonical_dump());
    assert_eq!(r.replicas[1].canonical_dump(), local.canonical_dump());
}

#[test]
fn host_wins_a_simultaneous_grab() {
    let g = new_game(2);
    let top = *g.pile(PileId::Deck(PlayerId::A)).last().unwrap() as usize;
    let (u, w) = PileId::Deck(PlayerId::A).anchor().unwrap();
    let grab = |player, time| HandEvent {
        player,
        position: [u, w, 0.01],
        kind: HandEventKind::Enter(HandTarget::Card(top)),
        time,
    };
    // B grabs first on its own clock, but the host sees its own grab first.
    let a = vec![grab(PlayerId::A, 1.1)];
    let b = vec![grab(PlayerId::B, 1.0)];
    let r = simulate_session(&a, &b, &SessionConfig { game_seed: 2, ..SessionConfig::default() });
    assert!(r.converged);
    for replica in &r.replicas {
        assert_eq!(replica.cards[top].state, CardState::Held(PlayerId::A));
    }
    // The guest predicted its own grab before the host's order arrived.
    assert!(r.transcript.iter().any(|rec| matches!(
        rec,
        TranscriptRecord::Apply { peer: PlayerId::B, confirmed: false, effects: Ok(e), .. }
            if matches!(e[0], Effect::PickedUp { player: PlayerId::B, .. })
    )));
}

#[test]
fn injected_fault_is_detected() {
    let (a, b) = scripted_war();
    let config = SessionConfig { fault_after: Some(30), ..SessionConfig::default() };
    let r = simulate_session(&a, &b, &config);
    assert!(r.divergence_detected);
    assert!(!r.converged);
    assert!(r.transcript.iter().any(|rec| matches!(rec, TranscriptRecord::Divergence { peer: PlayerId::B, .. })));
}

#[test]
fn anchors_are_exchanged() {
    let config = SessionConfig {
        anchors: [Some((-0.15, -0.3, 0.0)), Some((0.1, 0.25, 0.4))],
        ..SessionConfig::default()
    };
    let r = simulate_session(&[], &[], &config);
    let got: Vec<_> = r
        .transcript
        .iter()
        .filter_map(|rec| match rec {
            TranscriptRecord::Anchor { peer, from, .. } => Some((*peer, *from)),
            _ => None,
        })
        .collect();
    assert_eq!(got.len(), 2);
    assert!(got.contains(&(PlayerId::A, PlayerId::B)) && got.contains(&(PlayerId::B, PlayerId::A)));
}
