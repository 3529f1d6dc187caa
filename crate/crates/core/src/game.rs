//! Card state machine and two-player War.
//!
//! Every card is either in a pile or held by one player's hand. Hands act
//! through collider events: entering a pile (or its top card) with an empty
//! hand picks the top card up, entering a pile while holding a card puts it
//! down. A card that changed state less than [`DEBOUNCE_SECONDS`] ago ignores
//! further hand transitions.
//!
//! Game event trace, one event per line:
//!
//! ```text
//! <time> <player> enter pile:<pile> <u> <w> <h>
//! <time> <player> enter card:<index> <u> <w> <h>
//! <time> <player> exit <u> <w> <h>
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::player::PlayerId;
use crate::registry::{CardFace, CARDS_PER_DECK};

pub const DEBOUNCE_SECONDS: f64 = 2.0;
/// Largest in-plane distance from a pile anchor at which a card snaps onto it.
pub const SNAP_RADIUS: f64 = 0.02;
pub const HAND_COLLIDER_RADIUS: f64 = 0.05;
pub const TOTAL_CARDS: usize = 2 * CARDS_PER_DECK;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("unknown pile '{0}'")]
    UnknownPile(String),
    #[error("unknown card {0}")]
    UnknownCard(usize),
    #[error("battle piles do not hold one card from each player")]
    BattleIncomplete,
    #[error("event at t={event} precedes game clock t={clock}")]
    TimeRegression { event: f64, clock: f64 },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PileId {
    Deck(PlayerId),
    Battle1,
    Battle2,
    Score(PlayerId),
    /// Cards from tied battles, awarded to the next battle's winner. Not on
    /// the table, so hands cannot reach it.
    Pot,
}

impl PileId {
    pub const ALL: [PileId; 7] = [
        PileId::Deck(PlayerId::A),
        PileId::Deck(PlayerId::B),
        PileId::Battle1,
        PileId::Battle2,
        PileId::Score(PlayerId::A),
        PileId::Score(PlayerId::B),
        PileId::Pot,
    ];

    /// In-plane (u, w) anchor on the shared table, meters.
    pub fn anchor(self) -> Option<(f64, f64)> {
        match self {
            PileId::Deck(PlayerId::A) => Some((-0.15, -0.30)),
            PileId::Score(PlayerId::A) => Some((0.15, -0.30)),
            PileId::Battle1 => Some((-0.06, 0.0)),
            PileId::Battle2 => Some((0.06, 0.0)),
            PileId::Deck(PlayerId::B) => Some((0.15, 0.30)),
            PileId::Score(PlayerId::B) => Some((-0.15, 0.30)),
            PileId::Pot => None,
        }
    }

    /// Battle pile each player plays into.
    pub fn is_battle(self) -> bool {
        matches!(self, PileId::Battle1 | PileId::Battle2)
    }

    pub fn battle_of(player: PlayerId) -> PileId {
        match player {
            PlayerId::A => PileId::Battle1,
            PlayerId::B => PileId::Battle2,
        }
    }

    fn byte(self) -> u8 {
        PileId::ALL.iter().position(|p| *p == self).expect("listed") as u8
    }

    fn from_byte(b: u8) -> Option<PileId> {
        PileId::ALL.get(b as usize).copied()
    }
}

impl fmt::Display for PileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PileId::Deck(p) => write!(f, "deck:{p}"),
            PileId::Battle1 => f.write_str("battle1"),
            PileId::Battle2 => f.write_str("battle2"),
            PileId::Score(p) => write!(f, "score:{p}"),
            PileId::Pot => f.write_str("pot"),
        }
    }
}

impl FromStr for PileId {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PileId::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| GameError::UnknownPile(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CardState {
    InPile(PileId),
    Held(PlayerId),
}

/// A card's state as one player sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CardView {
    InPile(PileId),
    HeldLocal,
    HeldRemote,
}

impl CardState {
    pub fn view_from(self, viewer: PlayerId) -> CardView {
        match self {
            CardState::InPile(p) => CardView::InPile(p),
            CardState::Held(p) if p == viewer => CardView::HeldLocal,
            CardState::Held(_) => CardView::HeldRemote,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Card {
    /// 0..104; the first 52 belong to player A.
    pub index: u8,
    pub owner: PlayerId,
    pub face: CardFace,
    pub state: CardState,
    /// Event time of the last hand transition; `-inf` before the first.
    pub last_transition_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandTarget {
    Pile(PileId),
    Card(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandEventKind {
    Enter(HandTarget),
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandEvent {
    pub player: PlayerId,
    /// Hand point in table-plane coordinates (u, w) and height above the table.
    pub position: [f64; 3],
    pub kind: HandEventKind,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgnoreReason {
    /// Exit events never change state.
    ColliderExit,
    AlreadyHolding,
    EmptyPile,
    NotOnTop,
    HeldByOther,
    OutOfReach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BattleOutcome {
    /// `None` for a tie.
    pub winner: Option<PlayerId>,
    pub ranks: [u8; 2],
    /// Cards moved to the winner's score pile (or into the pot on a tie).
    pub cards: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    PickedUp { player: PlayerId, card: u8, from: PileId },
    Placed { player: PlayerId, card: u8, pile: PileId },
    /// Dropped outside every snap region; back to the pile it came from.
    Returned { player: PlayerId, card: u8, pile: PileId },
    DebounceBlocked { card: u8 },
    Ignored(IgnoreReason),
    BattleResolved(BattleOutcome),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameOutcome {
    Winner(PlayerId),
    Draw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub seed: u64,
    pub cards: Vec<Card>,
    /// Bottom to top.
    pub piles: BTreeMap<PileId, Vec<u8>>,
    pub held: [Option<u8>; 2],
    /// Pile each held card was taken from.
    pub held_from: [Option<PileId>; 2],
    pub clock: f64,
    pub battles: u32,
}

pub fn new_game(seed: u64) -> GameState {
    let mut cards = Vec::with_capacity(TOTAL_CARDS);
    let mut piles: BTreeMap<PileId, Vec<u8>> = PileId::ALL.iter().map(|p| (*p, Vec::new())).collect();
    for owner in PlayerId::BOTH {
        let mut order: Vec<u8> = (0..CARDS_PER_DECK)
            .map(|i| (owner.index() * CARDS_PER_DECK + i) as u8)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x0a11_0000 + owner.index() as u64));
        order.shuffle(&mut rng);
        piles.insert(PileId::Deck(owner), order);
        for i in 0..CARDS_PER_DECK {
            cards.push(Card {
                index: (owner.index() * CARDS_PER_DECK + i) as u8,
                owner,
                face: CardFace::standard(i),
                state: CardState::InPile(PileId::Deck(owner)),
                last_transition_time: f64::NEG_INFINITY,
            });
        }
    }
    GameState {
        seed,
        cards,
        piles,
        held: [None; 2],
        held_from: [None; 2],
        clock: 0.0,
        battles: 0,
    }
}

fn planar_distance(a: (f64, f64), p: &[f64; 3]) -> f64 {
    ((p[0] - a.0).powi(2) + (p[1] - a.1).powi(2)).sqrt()
}

fn hand_reaches(anchor: (f64, f64), p: &[f64; 3]) -> bool {
    (planar_distance(anchor, p).powi(2) + p[2].powi(2)).sqrt() <= HAND_COLLIDER_RADIUS
}

impl GameState {
    pub fn pile(&self, pile: PileId) -> &[u8] {
        self.piles.get(&pile).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn held_by(&self, player: PlayerId) -> Option<u8> {
        self.held[player.index()]
    }

    pub fn score(&self, player: PlayerId) -> usize {
        self.pile(PileId::Score(player)).len()
    }

    fn pile_mut(&mut self, pile: PileId) -> &mut Vec<u8> {
        self.piles.entry(pile).or_default()
    }

    fn card_mut(&mut self, card: u8) -> &mut Card {
        &mut self.cards[card as usize]
    }

    fn debounced(&self, card: u8, time: f64) -> bool {
        time - self.cards[card as usize].last_transition_time < DEBOUNCE_SECONDS
    }

    /// Applies one hand event. Battles resolve as soon as a card move leaves
    /// both battle piles holding one card from each player.
    pub fn apply(&mut self, ev: &HandEvent) -> Result<Vec<Effect>, GameError> {
        if ev.time < self.clock {
            return Err(GameError::TimeRegression {
                event: ev.time,
                clock: self.clock,
            });
        }
        if let HandEventKind::Enter(HandTarget::Card(c)) = ev.kind {
            if c >= TOTAL_CARDS {
                return Err(GameError::UnknownCard(c));
            }
        }
        if let HandEventKind::Enter(HandTarget::Pile(PileId::Pot)) = ev.kind {
            return Err(GameError::UnknownPile(PileId::Pot.to_string()));
        }
        self.clock = ev.time;
        let p = ev.player.index();
        let effect = match (ev.kind, self.held[p]) {
            (HandEventKind::Exit, _) => Effect::Ignored(IgnoreReason::ColliderExit),
            (HandEventKind::Enter(HandTarget::Card(_)), Some(_)) => Effect::Ignored(IgnoreReason::AlreadyHolding),
            (HandEventKind::Enter(target), None) => self.pick_up(ev, target),
            (HandEventKind::Enter(HandTarget::Pile(pile)), Some(card)) => self.put_down(ev, card, pile),
        };
        let mut effects = vec![effect];
        let moved = matches!(effect, Effect::PickedUp { .. } | Effect::Placed { .. } | Effect::Returned { .. });
        if moved && self.battle_ready() {
            effects.push(Effect::BattleResolved(self.resolve_battle()?));
        }
        Ok(effects)
    }

    fn pick_up(&mut self, ev: &HandEvent, target: HandTarget) -> Effect {
        let (pile, card) = match target {
            HandTarget::Pile(pile) => match self.pile(pile).last() {
                Some(&c) => (pile, c),
                None => return Effect::Ignored(IgnoreReason::EmptyPile),
            },
            HandTarget::Card(c) => match self.cards[c].state {
                CardState::Held(_) => return Effect::Ignored(IgnoreReason::HeldByOther),
                CardState::InPile(pile) => {
                    if self.pile(pile).last() != Some(&(c as u8)) {
                        return Effect::Ignored(IgnoreReason::NotOnTop);
                    }
                    (pile, c as u8)
                }
            },
        };
        match pile.anchor() {
            Some(a) if hand_reaches(a, &ev.position) => {}
            _ => return Effect::Ignored(IgnoreReason::OutOfReach),
        }
        if self.debounced(card, ev.time) {
            return Effect::DebounceBlocked { card };
        }
        self.pile_mut(pile).pop();
        let p = ev.player.index();
        self.held[p] = Some(card);
        self.held_from[p] = Some(pile);
        let c = self.card_mut(card);
        c.state = CardState::Held(ev.player);
        c.last_transition_time = ev.time;
        Effect::PickedUp {
            player: ev.player,
            card,
            from: pile,
        }
    }

    fn put_down(&mut self, ev: &HandEvent, card: u8, pile: PileId) -> Effect {
        if self.debounced(card, ev.time) {
            return Effect::DebounceBlocked { card };
        }
        let p = ev.player.index();
        let origin = self.held_from[p].expect("held card has an origin");
        let snapped = pile.anchor().is_some_and(|a| planar_distance(a, &ev.position) <= SNAP_RADIUS)
            && !(pile.is_battle() && !self.pile(pile).is_empty());
        let dest = if snapped { pile } else { origin };
        self.pile_mut(dest).push(card);
        self.held[p] = None;
        self.held_from[p] = None;
        let c = self.card_mut(card);
        c.state = CardState::InPile(dest);
        c.last_transition_time = ev.time;
        if snapped {
            Effect::Placed {
                player: ev.player,
                card,
                pile: dest,
            }
        } else {
            Effect::Returned {
                player: ev.player,
                card,
                pile: dest,
            }
        }
    }

    fn battle_ready(&self) -> bool {
        let (b1, b2) = (self.pile(PileId::Battle1), self.pile(PileId::Battle2));
        b1.len() == 1 && b2.len() == 1 && self.cards[b1[0] as usize].owner != self.cards[b2[0] as usize].owner
    }

    /// Higher rank takes both battle cards and the pot; a tie sends both
    /// into the pot.
    pub fn resolve_battle(&mut self) -> Result<BattleOutcome, GameError> {
        if !self.battle_ready() {
            return Err(GameError::BattleIncomplete);
        }
        let mut played = [0u8; 2];
        for pile in [PileId::Battle1, PileId::Battle2] {
            let c = self.pile_mut(pile).pop().expect("checked");
            played[self.cards[c as usize].owner.index()] = c;
        }
        let ranks = played.map(|c| self.cards[c as usize].face.rank);
        let winner = match ranks[0].cmp(&ranks[1]) {
            std::cmp::Ordering::Greater => Some(PlayerId::A),
            std::cmp::Ordering::Less => Some(PlayerId::B),
            std::cmp::Ordering::Equal => None,
        };
        let dest = winner.map_or(PileId::Pot, PileId::Score);
        let mut moved: Vec<u8> = played.to_vec();
        if winner.is_some() {
            moved.extend(std::mem::take(self.pile_mut(PileId::Pot)));
        }
        for &c in &moved {
            self.card_mut(c).state = CardState::InPile(dest);
        }
        let cards = moved.len();
        self.pile_mut(dest).extend(moved);
        self.battles += 1;
        Ok(BattleOutcome { winner, ranks, cards })
    }

    pub fn game_over(&self) -> Option<GameOutcome> {
        let decks_empty = PlayerId::BOTH.iter().all(|p| self.pile(PileId::Deck(*p)).is_empty());
        if !decks_empty || self.held.iter().any(Option::is_some) {
            return None;
        }
        Some(match self.score(PlayerId::A).cmp(&self.score(PlayerId::B)) {
            std::cmp::Ordering::Greater => GameOutcome::Winner(PlayerId::A),
            std::cmp::Ordering::Less => GameOutcome::Winner(PlayerId::B),
            std::cmp::Ordering::Equal => GameOutcome::Draw,
        })
    }

    /// Checks card conservation, pile/state agreement and the one-card rule.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![false; TOTAL_CARDS];
        for (pile, stack) in &self.piles {
            for &c in stack {
                if std::mem::replace(&mut seen[c as usize], true) {
                    return Err(format!("card {c} appears twice"));
                }
                if self.cards[c as usize].state != CardState::InPile(*pile) {
                    return Err(format!("card {c} is in {pile} but its state disagrees"));
                }
            }
        }
        for p in PlayerId::BOTH {
            if let Some(c) = self.held[p.index()] {
                if std::mem::replace(&mut seen[c as usize], true) {
                    return Err(format!("held card {c} is also in a pile"));
                }
                if self.cards[c as usize].state != CardState::Held(p) {
                    return Err(format!("card {c} is held by {p} but its state disagrees"));
                }
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(format!("card {c} is missing"));
        }
        for p in PlayerId::BOTH {
            let n = self
                .cards
                .iter()
                .filter(|c| c.owner == p)
                .count();
            if n != CARDS_PER_DECK {
                return Err(format!("player {p} owns {n} cards"));
            }
            let held = self.cards.iter().filter(|c| c.state == CardState::Held(p)).count();
            if held > 1 {
                return Err(format!("player {p} holds {held} cards"));
            }
        }
        Ok(())
    }

    /// Canonical text form: equal strings iff equal replicated state.
    pub fn canonical_dump(&self) -> String {
        let mut s = String::new();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "clock {}", self.clock).unwrap();
        writeln!(s, "battles {}", self.battles).unwrap();
        for (pile, stack) in &self.piles {
            write!(s, "pile {pile}").unwrap();
            for c in stack {
                write!(s, " {c}").unwrap();
            }
            writeln!(s).unwrap();
        }
        for p in PlayerId::BOTH {
            match (self.held[p.index()], self.held_from[p.index()]) {
                (Some(c), Some(from)) => writeln!(s, "held {p} {c} {from}").unwrap(),
                _ => writeln!(s, "held {p} -").unwrap(),
            }
        }
        for c in &self.cards {
            let state = match c.state {
                CardState::InPile(p) => p.to_string(),
                CardState::Held(p) => format!("held:{p}"),
            };
            writeln!(
                s,
                "card {} {} {}{} {} {}",
                c.index,
                c.owner,
                c.face.rank,
                c.face.suit.code(),
                state,
                c.last_transition_time
            )
            .unwrap();
        }
        s
    }
}

pub fn apply_hand_event(state: &GameState, ev: &HandEvent) -> Result<(GameState, Vec<Effect>), GameError> {
    let mut next = state.clone();
    let effects = next.apply(ev)?;
    Ok((next, effects))
}

pub fn resolve_battle(state: &GameState) -> Result<(GameState, BattleOutcome), GameError> {
    let mut next = state.clone();
    let outcome = next.resolve_battle()?;
    Ok((next, outcome))
}

pub fn game_over(state: &GameState) -> Option<GameOutcome> {
    state.game_over()
}

impl fmt::Display for HandEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.time, self.player)?;
        match self.kind {
            HandEventKind::Enter(HandTarget::Pile(p)) => write!(f, "enter pile:{p}")?,
            HandEventKind::Enter(HandTarget::Card(c)) => write!(f, "enter card:{c}")?,
            HandEventKind::Exit => f.write_str("exit")?,
        }
        let [u, w, h] = self.position;
        write!(f, " {u} {w} {h}")
    }
}

impl FromStr for HandEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = s.split_whitespace().collect();
        let num = |x: &str| {
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad number '{x}'"))
        };
        let (kind, rest) = match f.get(2).copied() {
            Some("enter") if f.len() == 7 => {
                let target = if let Some(p) = f[3].strip_prefix("pile:") {
                    HandTarget::Pile(p.parse().map_err(|e: GameError| e.to_string())?)
                } else if let Some(c) = f[3].strip_prefix("card:") {
                    HandTarget::Card(c.parse().map_err(|_| format!("bad card '{c}'"))?)
                } else {
                    return Err(format!("bad target '{}'", f[3]));
                };
                (HandEventKind::Enter(target), &f[4..])
            }
            Some("exit") if f.len() == 6 => (HandEventKind::Exit, &f[3..]),
            _ => return Err("expected '<t> <player> enter <target> <u> <w> <h>' or '<t> <player> exit <u> <w> <h>'".into()),
        };
        Ok(HandEvent {
            time: num(f[0])?,
            player: f[1].parse()?,
            kind,
            position: [num(rest[0])?, num(rest[1])?, num(rest[2])?],
        })
    }
}

pub const EVENT_TRACE_HEADER: &str = "# cardtrack hand events v1";

pub fn write_events<W: Write>(events: &[HandEvent], mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "{EVENT_TRACE_HEADER}")?;
    for e in events {
        writeln!(sink, "{e}")?;
    }
    sink.flush()
}

pub fn read_events<R: BufRead>(source: R) -> Result<Vec<HandEvent>, GameError> {
    let mut out: Vec<HandEvent> = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(|e| GameError::Io(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ev: HandEvent = line.parse().map_err(|message| GameError::Format { line: i + 1, message })?;
        if out.last().is_some_and(|prev| ev.time < prev.time) {
            return Err(GameError::Format {
                line: i + 1,
                message: "events must be in time order".into(),
            });
        }
        out.push(ev);
    }
    Ok(out)
}

/// Merged single-machine order: by time, player A first on ties.
pub fn merge_traces(a: &[HandEvent], b: &[HandEvent]) -> Vec<HandEvent> {
    let mut all: Vec<HandEvent> = a.iter().chain(b).copied().collect();
    all.sort_by(|x, y| x.time.total_cmp(&y.time).then(x.player.cmp(&y.player)));
    all
}

/// Seconds between consecutive battles in [`scripted_war`].
pub const BATTLE_PERIOD: f64 = 6.0;

fn event_at(player: PlayerId, pile: PileId, time: f64) -> HandEvent {
    let (u, w) = pile.anchor().expect("table pile");
    HandEvent {
        player,
        position: [u, w, 0.01],
        kind: HandEventKind::Enter(HandTarget::Pile(pile)),
        time,
    }
}

/// Both players draw their top card and play it into their battle pile,
/// once per [`BATTLE_PERIOD`], until the decks run out.
pub fn scripted_war() -> (Vec<HandEvent>, Vec<HandEvent>) {
    let mut traces = (Vec::new(), Vec::new());
    for i in 0..CARDS_PER_DECK {
        let t0 = i as f64 * BATTLE_PERIOD;
        for (player, trace, lag) in [
            (PlayerId::A, &mut traces.0, 0.0),
            (PlayerId::B, &mut traces.1, 0.2),
        ] {
            trace.push(event_at(player, PileId::Deck(player), t0 + lag));
            trace.push(event_at(player, PileId::battle_of(player), t0 + lag + 2.5));
            let mut exit = event_at(player, PileId::battle_of(player), t0 + lag + 2.7);
            exit.kind = HandEventKind::Exit;
            trace.push(exit);
        }
    }
    traces
}

/// Runs events through a fresh game, returning the final state and the
/// effects of every event.
pub fn replay(seed: u64, events: &[HandEvent]) -> Result<(GameState, Vec<Vec<Effect>>), GameError> {
    let mut state = new_game(seed);
    let effects = events.iter().map(|e| state.apply(e)).collect::<Result<_, _>>()?;
    Ok((state, effects))
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::PickedUp { player, card, from } => write!(f, "pickup {player} {card} {from}"),
            Effect::Placed { player, card, pile } => write!(f, "place {player} {card} {pile}"),
            Effect::Returned { player, card, pile } => write!(f, "return {player} {card} {pile}"),
            Effect::DebounceBlocked { card } => write!(f, "debounce {card}"),
            Effect::Ignored(r) => write!(f, "ignored {r:?}"),
            Effect::BattleResolved(o) => match o.winner {
                Some(w) => write!(f, "battle {} {} winner {w} +{}", o.ranks[0], o.ranks[1], o.cards),
                None => write!(f, "battle {} {} tie pot +{}", o.ranks[0], o.ranks[1], o.cards),
            },
        }
    }
}

pub(crate) fn pile_byte(p: PileId) -> u8 {
    p.byte()
}

pub(crate) fn pile_from_byte(b: u8) -> Option<PileId> {
    PileId::from_byte(b)
}

/// Two-dimensional rigid map from one player's calibrated table frame onto
/// the shared table, placing their deck anchor at their seat's deck pile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeatTransform {
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl SeatTransform {
    /// `anchor` is the calibrated deck position and heading in the player's
    /// own table frame. Player B sits across the table, facing A.
    pub fn for_seat(player: PlayerId, anchor_u: f64, anchor_w: f64, anchor_heading: f64) -> Self {
        let seat_heading = match player {
            PlayerId::A => 0.0,
            PlayerId::B => std::f64::consts::PI,
        };
        let rotation = seat_heading - anchor_heading;
        let (s, c) = rotation.sin_cos();
        let (du, dw) = PileId::Deck(player).anchor().expect("deck anchor");
        let translation = (du - (c * anchor_u - s * anchor_w), dw - (s * anchor_u + c * anchor_w));
        Self { rotation, translation }
    }

    pub fn apply(&self, u: f64, w: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (c * u - s * w + self.translation.0, s * u + c * w + self.translation.1)
    }
}
