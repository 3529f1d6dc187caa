use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cardtrack::game::{HandEvent, HandEventKind, HandTarget, PileId, TOTAL_CARDS};
use cardtrack::player::PlayerId;

/// A time-ordered trace for one player, mostly aimed at table piles.
pub fn random_trace(seed: u64, player: PlayerId, len: usize, mean_gap: f64) -> Vec<HandEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let piles: Vec<PileId> = PileId::ALL.iter().copied().filter(|p| p.anchor().is_some()).collect();
    let mut t = 0.0;
    (0..len)
        .map(|_| {
            t += rng.random_range(0.0..2.0 * mean_gap);
            let pile = piles[rng.random_range(0..piles.len())];
            let (u, w) = pile.anchor().unwrap();
            let spread = if rng.random_bool(0.85) { 0.015 } else { 0.08 };
            let kind = match rng.random_range(0..10) {
                0..=6 => HandEventKind::Enter(HandTarget::Pile(pile)),
                7 => HandEventKind::Enter(HandTarget::Card(rng.random_range(0..TOTAL_CARDS))),
                _ => HandEventKind::Exit,
            };
            HandEvent {
                player,
                position: [u + rng.random_range(-spread..spread), w + rng.random_range(-spread..spread), 0.01],
                kind,
                time: t,
            }
        })
        .collect()
}
