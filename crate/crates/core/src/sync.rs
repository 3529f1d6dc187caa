//! Two-peer replication of the game over a simulated lossy channel.
//!
//! Player A hosts. The host applies its own hand events and the guest's in
//! the order they reach it, keeping the guest's own timestamp unless that
//! would run the host clock backwards, and forwards every applied event to the guest followed by a digest of its
//! state. The guest keeps a confirmed replica built only from the host's
//! stream and shows that replica with its own not-yet-confirmed events
//! replayed on top.
//!
//! Frame layout (all integers little-endian, floats as IEEE-754 bits):
//!
//! ```text
//! u32  length of everything after this field
//! u8   version (1)
//! u8   kind: 1 hand event, 2 calibration anchor, 3 state digest, 4 ack
//! u64  sequence number
//! u8   sender (0 = A, 1 = B)
//! f64  send time
//! kind 1: u8 player, u8 event kind (0 enter pile, 1 enter card, 2 exit),
//!         u32 target, f64 u, f64 w, f64 h, f64 time, u8 has_origin, u64 origin
//! kind 2: u8 player, f64 u, f64 w, f64 heading
//! kind 3: u64 events applied, [u8; 8] digest
//! kind 4: u64 acknowledged sequence number
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::game::{
    new_game, pile_byte, pile_from_byte, Effect, GameError, GameState, HandEvent, HandEventKind, HandTarget,
    SeatTransform,
};
use crate::player::PlayerId;

pub const PROTOCOL_VERSION: u8 = 1;
pub const DEFAULT_LATENCY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyncError {
    #[error("malformed frame at byte {offset}: {reason}")]
    MalformedFrame { offset: usize, reason: &'static str },
    #[error("message {got} from {sender} arrived before {expected}; buffered")]
    OutOfOrder { sender: PlayerId, expected: u64, got: u64 },
    #[error("state digest mismatch after {applied} events")]
    DivergenceDetected { applied: u64 },
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    HandEvent {
        event: HandEvent,
        /// Sender-side sequence number of the guest message this forwards.
        origin_seq: Option<u64>,
    },
    CalibrationAnchor {
        player: PlayerId,
        u: f64,
        w: f64,
        heading: f64,
    },
    StateDigest { applied: u64, digest: [u8; 8] },
    /// Channel-level acknowledgement; not sequenced.
    Ack { seq: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncMessage {
    pub seq: u64,
    pub sender: PlayerId,
    pub send_time: f64,
    pub payload: Payload,
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_bits().to_le_bytes());
}

pub fn encode_message(m: &SyncMessage) -> Vec<u8> {
    let mut body = vec![PROTOCOL_VERSION];
    let kind = match m.payload {
        Payload::HandEvent { .. } => 1u8,
        Payload::CalibrationAnchor { .. } => 2,
        Payload::StateDigest { .. } => 3,
        Payload::Ack { .. } => 4,
    };
    body.push(kind);
    body.extend_from_slice(&m.seq.to_le_bytes());
    body.push(m.sender.index() as u8);
    put_f64(&mut body, m.send_time);
    match m.payload {
        Payload::HandEvent { event, origin_seq } => {
            body.push(event.player.index() as u8);
            let (k, target) = match event.kind {
                HandEventKind::Enter(HandTarget::Pile(p)) => (0u8, pile_byte(p) as u32),
                HandEventKind::Enter(HandTarget::Card(c)) => (1, c as u32),
                HandEventKind::Exit => (2, 0),
            };
            body.push(k);
            body.extend_from_slice(&target.to_le_bytes());
            for v in event.position {
                put_f64(&mut body, v);
            }
            put_f64(&mut body, event.time);
            body.push(origin_seq.is_some() as u8);
            body.extend_from_slice(&origin_seq.unwrap_or(0).to_le_bytes());
        }
        Payload::CalibrationAnchor { player, u, w, heading } => {
            body.push(player.index() as u8);
            put_f64(&mut body, u);
            put_f64(&mut body, w);
            put_f64(&mut body, heading);
        }
        Payload::StateDigest { applied, digest } => {
            body.extend_from_slice(&applied.to_le_bytes());
            body.extend_from_slice(&digest);
        }
        Payload::Ack { seq } => body.extend_from_slice(&seq.to_le_bytes()),
    }
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend(body);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], SyncError> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or(SyncError::MalformedFrame {
            offset: self.pos,
            reason: "truncated",
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, SyncError> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32, SyncError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, SyncError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, SyncError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn player(&mut self) -> Result<PlayerId, SyncError> {
        let offset = self.pos;
        PlayerId::from_index(self.u8()? as usize).ok_or(SyncError::MalformedFrame {
            offset,
            reason: "bad player",
        })
    }

    fn bad(&self, offset: usize, reason: &'static str) -> SyncError {
        SyncError::MalformedFrame { offset, reason }
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<SyncMessage, SyncError> {
    let mut r = Reader { bytes, pos: 0 };
    let len = r.u32()? as usize;
    if bytes.len() - 4 != len {
        return Err(r.bad(0, "length prefix does not match frame size"));
    }
    if r.u8()? != PROTOCOL_VERSION {
        return Err(r.bad(4, "unsupported version"));
    }
    let kind_at = r.pos;
    let kind = r.u8()?;
    let seq = r.u64()?;
    let sender = r.player()?;
    let send_time = r.f64()?;
    let payload = match kind {
        1 => {
            let player = r.player()?;
            let kind_offset = r.pos;
            let k = r.u8()?;
            let target_offset = r.pos;
            let target = r.u32()?;
            let kind = match k {
                0 => HandEventKind::Enter(HandTarget::Pile(
                    u8::try_from(target)
                        .ok()
                        .and_then(pile_from_byte)
                        .ok_or_else(|| r.bad(target_offset, "bad pile"))?,
                )),
                1 => HandEventKind::Enter(HandTarget::Card(target as usize)),
                2 => HandEventKind::Exit,
                _ => return Err(r.bad(kind_offset, "bad hand event kind")),
            };
            let position = [r.f64()?, r.f64()?, r.f64()?];
            let time = r.f64()?;
            let flag_offset = r.pos;
            let has_origin = r.u8()?;
            let origin = r.u64()?;
            let origin_seq = match has_origin {
                0 => None,
                1 => Some(origin),
                _ => return Err(r.bad(flag_offset, "bad origin flag")),
            };
            Payload::HandEvent {
                event: HandEvent {
                    player,
                    position,
                    kind,
                    time,
                },
                origin_seq,
            }
        }
        2 => Payload::CalibrationAnchor {
            player: r.player()?,
            u: r.f64()?,
            w: r.f64()?,
            heading: r.f64()?,
        },
        3 => Payload::StateDigest {
            applied: r.u64()?,
            digest: r.take()?,
        },
        4 => Payload::Ack { seq: r.u64()? },
        _ => return Err(r.bad(kind_at, "unknown message kind")),
    };
    if r.pos != bytes.len() {
        return Err(r.bad(r.pos, "trailing bytes"));
    }
    Ok(SyncMessage {
        seq,
        sender,
        send_time,
        payload,
    })
}

/// First eight bytes of the SHA-256 of the canonical state dump.
pub fn state_digest(state: &GameState) -> [u8; 8] {
    let hash = Sha256::digest(state.canonical_dump().as_bytes());
    hash[..8].try_into().expect("sha256 is 32 bytes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Host,
    Guest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemoteAnchor {
    pub player: PlayerId,
    pub u: f64,
    pub w: f64,
    pub heading: f64,
    /// Maps the remote player's table frame onto the shared table.
    pub seat: SeatTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TranscriptRecord {
    Apply {
        time: f64,
        peer: PlayerId,
        /// `false` for the guest's local prediction.
        confirmed: bool,
        event: HandEvent,
        effects: Result<Vec<Effect>, GameError>,
    },
    Anchor { time: f64, peer: PlayerId, from: PlayerId },
    DigestMatch { time: f64, peer: PlayerId, applied: u64 },
    Divergence { time: f64, peer: PlayerId, applied: u64 },
}

impl fmt::Display for TranscriptRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TranscriptRecord::Apply {
                time,
                peer,
                confirmed,
                event,
                effects,
            } => {
                let tag = if *confirmed { "apply" } else { "predict" };
                write!(f, "{time} {peer} {tag} [{event}] ->")?;
                match effects {
                    Ok(list) => {
                        for e in list {
                            write!(f, " {e};")?;
                        }
                        Ok(())
                    }
                    Err(e) => write!(f, " error {e}"),
                }
            }
            TranscriptRecord::Anchor { time, peer, from } => write!(f, "{time} {peer} anchor from {from}"),
            TranscriptRecord::DigestMatch { time, peer, applied } => {
                write!(f, "{time} {peer} digest-ok {applied}")
            }
            TranscriptRecord::Divergence { time, peer, applied } => {
                write!(f, "{time} {peer} divergence {applied}")
            }
        }
    }
}

/// Output of handing one message (or local event) to a session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub records: Vec<TranscriptRecord>,
    pub outgoing: Vec<SyncMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerSession {
    pub player: PlayerId,
    /// Reliable-ordered delivery: apply strictly in sequence, buffering gaps.
    pub ordered: bool,
    confirmed: GameState,
    /// Events folded into `confirmed`, in host order.
    applied: u64,
    /// Guest events sent but not yet echoed by the host.
    pending: Vec<(u64, HandEvent)>,
    next_seq: u64,
    next_expected: u64,
    buffer: BTreeMap<u64, SyncMessage>,
    pub remote_anchor: Option<RemoteAnchor>,
    pub diverged: bool,
    /// Test hook: corrupt the confirmed state after this many events.
    fault_after: Option<u64>,
}

impl PeerSession {
    pub fn new(player: PlayerId, game_seed: u64) -> Self {
        Self {
            player,
            ordered: true,
            confirmed: new_game(game_seed),
            applied: 0,
            pending: Vec::new(),
            next_seq: 1,
            next_expected: 1,
            buffer: BTreeMap::new(),
            remote_anchor: None,
            diverged: false,
            fault_after: None,
        }
    }

    pub fn role(&self) -> Role {
        match self.player {
            PlayerId::A => Role::Host,
            PlayerId::B => Role::Guest,
        }
    }

    pub fn confirmed(&self) -> &GameState {
        &self.confirmed
    }

    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn inject_fault_after(&mut self, applied: u64) {
        self.fault_after = Some(applied);
    }

    /// The state this peer displays: confirmed state plus local predictions.
    pub fn replica(&self) -> GameState {
        let mut s = self.confirmed.clone();
        for (_, ev) in &self.pending {
            let mut ev = *ev;
            ev.time = ev.time.max(s.clock);
            let _ = s.apply(&ev);
        }
        s
    }

    fn message(&mut self, now: f64, payload: Payload) -> SyncMessage {
        let m = SyncMessage {
            seq: self.next_seq,
            sender: self.player,
            send_time: now,
            payload,
        };
        self.next_seq += 1;
        m
    }

    fn apply_confirmed(&mut self, now: f64, event: HandEvent, step: &mut Step) -> Result<Vec<Effect>, GameError> {
        let effects = self.confirmed.apply(&event);
        self.applied += 1;
        if self.fault_after == Some(self.applied) {
            self.confirmed.battles += 1000;
        }
        step.records.push(TranscriptRecord::Apply {
            time: now,
            peer: self.player,
            confirmed: true,
            event,
            effects: effects.clone(),
        });
        effects
    }

    /// Host: applies and forwards. Guest: predicts and sends to the host.
    pub fn local_event(&mut self, mut event: HandEvent, now: f64) -> Step {
        let mut step = Step::default();
        event.player = self.player;
        match self.role() {
            Role::Host => {
                event.time = event.time.max(self.confirmed.clock);
                let _ = self.apply_confirmed(now, event, &mut step);
                self.forward(now, event, None, &mut step);
            }
            Role::Guest => {
                let mut predicted = self.replica();
                let seq = self.next_seq;
                let m = self.message(now, Payload::HandEvent { event, origin_seq: Some(seq) });
                self.pending.push((seq, event));
                let mut ev = event;
                ev.time = ev.time.max(predicted.clock);
                step.records.push(TranscriptRecord::Apply {
                    time: now,
                    peer: self.player,
                    confirmed: false,
                    event,
                    effects: predicted.apply(&ev),
                });
                step.outgoing.push(m);
            }
        }
        step
    }

    fn forward(&mut self, now: f64, event: HandEvent, origin_seq: Option<u64>, step: &mut Step) {
        let fwd = self.message(now, Payload::HandEvent { event, origin_seq });
        let digest = self.message(
            now,
            Payload::StateDigest {
                applied: self.applied,
                digest: state_digest(&self.confirmed),
            },
        );
        step.outgoing.push(fwd);
        step.outgoing.push(digest);
    }

    pub fn announce_anchor(&mut self, now: f64, u: f64, w: f64, heading: f64) -> SyncMessage {
        let player = self.player;
        self.message(now, Payload::CalibrationAnchor { player, u, w, heading })
    }

    /// Handles one message from the peer. Out-of-order messages are buffered
    /// and reported; duplicates are ignored.
    pub fn receive(&mut self, m: &SyncMessage, now: f64) -> Result<Step, SyncError> {
        let mut step = Step::default();
        if matches!(m.payload, Payload::Ack { .. }) || m.sender == self.player {
            return Ok(step);
        }
        if m.seq < self.next_expected || self.buffer.contains_key(&m.seq) {
            return Ok(step);
        }
        if self.ordered && m.seq > self.next_expected {
            self.buffer.insert(m.seq, *m);
            return Err(SyncError::OutOfOrder {
                sender: m.sender,
                expected: self.next_expected,
                got: m.seq,
            });
        }
        self.next_expected = m.seq + 1;
        self.handle(m, now, &mut step);
        while let Some(next) = self.buffer.remove(&self.next_expected) {
            self.next_expected += 1;
            self.handle(&next, now, &mut step);
        }
        Ok(step)
    }

    fn handle(&mut self, m: &SyncMessage, now: f64, step: &mut Step) {
        match m.payload {
            Payload::HandEvent { mut event, origin_seq } => match self.role() {
                Role::Host => {
                    event.player = m.sender;
                    event.time = event.time.max(self.confirmed.clock);
                    let _ = self.apply_confirmed(now, event, step);
                    self.forward(now, event, origin_seq, step);
                }
                Role::Guest => {
                    let _ = self.apply_confirmed(now, event, step);
                    if let Some(s) = origin_seq {
                        self.pending.retain(|(seq, _)| *seq > s);
                    }
                }
            },
            Payload::CalibrationAnchor { player, u, w, heading } => {
                self.remote_anchor = Some(RemoteAnchor {
                    player,
                    u,
                    w,
                    heading,
                    seat: SeatTransform::for_seat(player, u, w, heading),
                });
                step.records.push(TranscriptRecord::Anchor {
                    time: now,
                    peer: self.player,
                    from: m.sender,
                });
            }
            Payload::StateDigest { applied, digest } => {
                if applied == self.applied {
                    if digest == state_digest(&self.confirmed) {
                        step.records.push(TranscriptRecord::DigestMatch {
                            time: now,
                            peer: self.player,
                            applied,
                        });
                    } else {
                        self.diverged = true;
                        step.records.push(TranscriptRecord::Divergence {
                            time: now,
                            peer: self.player,
                            applied,
                        });
                    }
                }
            }
            Payload::Ack { .. } => {}
        }
    }
}

/// Single-message form: delivers `m` and reports divergence as an error.
pub fn peer_apply(session: &mut PeerSession, m: &SyncMessage, now: f64) -> Result<Step, SyncError> {
    let step = session.receive(m, now)?;
    if let Some(TranscriptRecord::Divergence { applied, .. }) = step
        .records
        .iter()
        .find(|r| matches!(r, TranscriptRecord::Divergence { .. }))
    {
        return Err(SyncError::DivergenceDetected { applied: *applied });
    }
    Ok(step)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// One-way delay, seconds.
    pub latency: f64,
    pub drop_probability: f64,
    pub seed: u64,
    /// Acknowledge and retransmit, and apply strictly in sequence.
    pub reliable: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            latency: DEFAULT_LATENCY,
            drop_probability: 0.0,
            seed: 0,
            reliable: true,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(format!("latency must be finite and >= 0, got {}", self.latency));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(format!("drop probability must be in [0, 1), got {}", self.drop_probability));
        }
        Ok(())
    }

    fn retransmit_timeout(&self) -> f64 {
        2.0 * self.latency + 0.05
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionConfig {
    pub game_seed: u64,
    pub channel: ChannelConfig,
    /// Deck anchors (u, w, heading) each player announces at start.
    pub anchors: [Option<(f64, f64, f64)>; 2],
    /// Corrupt the guest's confirmed state after this many events.
    pub fault_after: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub transcript: Vec<TranscriptRecord>,
    /// What each peer displays at quiescence, indexed by player.
    pub replicas: [GameState; 2],
    pub converged: bool,
    pub divergence_detected: bool,
    /// First transmissions of sequenced messages.
    pub messages: usize,
    pub retransmissions: usize,
    pub acks: usize,
    pub dropped: usize,
    pub end_time: f64,
}

impl SessionReport {
    /// Total frames put on the wire.
    pub fn transmissions(&self) -> usize {
        self.messages + self.retransmissions + self.acks
    }

    /// Confirmed applies at one peer, in order.
    pub fn applies_at(&self, peer: PlayerId) -> Vec<(HandEvent, Result<Vec<Effect>, GameError>)> {
        self.transcript
            .iter()
            .filter_map(|r| match r {
                TranscriptRecord::Apply {
                    peer: p,
                    confirmed: true,
                    event,
                    effects,
                    ..
                } if *p == peer => Some((*event, effects.clone())),
                _ => None,
            })
            .collect()
    }
}

enum SimEvent {
    Local(PlayerId, HandEvent),
    Deliver(PlayerId, Vec<u8>),
    Retransmit(PlayerId, u64),
}

struct Queued {
    time: f64,
    order: u64,
    event: SimEvent,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so that BinaryHeap pops the earliest (time, order) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.order.cmp(&self.order))
    }
}

const MAX_ATTEMPTS: u32 = 10_000;

struct Simulator {
    queue: BinaryHeap<Queued>,
    order: u64,
    rng: ChaCha8Rng,
    channel: ChannelConfig,
    unacked: [BTreeMap<u64, (SyncMessage, u32)>; 2],
    report_counts: (usize, usize, usize, usize),
}

impl Simulator {
    fn push(&mut self, time: f64, event: SimEvent) {
        self.queue.push(Queued {
            time,
            order: self.order,
            event,
        });
        self.order += 1;
    }

    fn transmit(&mut self, now: f64, m: &SyncMessage) {
        let to = m.sender.other();
        if self.rng.random::<f64>() < self.channel.drop_probability {
            self.report_counts.3 += 1;
        } else {
            self.push(now + self.channel.latency, SimEvent::Deliver(to, encode_message(m)));
        }
    }

    fn send(&mut self, now: f64, m: SyncMessage) {
        self.report_counts.0 += 1;
        self.transmit(now, &m);
        if self.channel.reliable {
            self.unacked[m.sender.index()].insert(m.seq, (m, 1));
            self.push(
                now + self.channel.retransmit_timeout(),
                SimEvent::Retransmit(m.sender, m.seq),
            );
        }
    }
}

/// Runs both players' traces against each other over the channel until no
/// events or messages remain.
pub fn simulate_session(trace_a: &[HandEvent], trace_b: &[HandEvent], config: &SessionConfig) -> SessionReport {
    let mut peers = [
        PeerSession::new(PlayerId::A, config.game_seed),
        PeerSession::new(PlayerId::B, config.game_seed),
    ];
    for p in &mut peers {
        p.ordered = config.channel.reliable;
    }
    if let Some(n) = config.fault_after {
        peers[1].inject_fault_after(n);
    }
    let mut sim = Simulator {
        queue: BinaryHeap::new(),
        order: 0,
        rng: ChaCha8Rng::seed_from_u64(config.channel.seed),
        channel: config.channel,
        unacked: [BTreeMap::new(), BTreeMap::new()],
        report_counts: (0, 0, 0, 0),
    };
    let mut transcript = Vec::new();

    for p in PlayerId::BOTH {
        if let Some((u, w, h)) = config.anchors[p.index()] {
            let m = peers[p.index()].announce_anchor(0.0, u, w, h);
            sim.send(0.0, m);
        }
    }
    // Host events enter the queue first so they win ties.
    for (p, trace) in [(PlayerId::A, trace_a), (PlayerId::B, trace_b)] {
        for ev in trace {
            sim.push(ev.time, SimEvent::Local(p, *ev));
        }
    }

    let mut now = 0.0;
    while let Some(q) = sim.queue.pop() {
        now = q.time;
        match q.event {
            SimEvent::Local(p, ev) => {
                let step = peers[p.index()].local_event(ev, now);
                transcript.extend(step.records);
                for m in step.outgoing {
                    sim.send(now, m);
                }
            }
            SimEvent::Deliver(to, bytes) => {
                let m = decode_message(&bytes).expect("simulator frames are well formed");
                if let Payload::Ack { seq } = m.payload {
                    sim.unacked[to.index()].remove(&seq);
                    continue;
                }
                if sim.channel.reliable {
                    let ack = SyncMessage {
                        seq: 0,
                        sender: to,
                        send_time: now,
                        payload: Payload::Ack { seq: m.seq },
                    };
                    sim.report_counts.2 += 1;
                    sim.transmit(now, &ack);
                }
                if let Ok(step) = peers[to.index()].receive(&m, now) {
                    transcript.extend(step.records);
                    for out in step.outgoing {
                        sim.send(now, out);
                    }
                }
            }
            SimEvent::Retransmit(owner, seq) => {
                let Some((m, attempts)) = sim.unacked[owner.index()].get(&seq).copied() else {
                    continue;
                };
                if attempts >= MAX_ATTEMPTS {
                    sim.unacked[owner.index()].remove(&seq);
                    continue;
                }
                sim.unacked[owner.index()].insert(seq, (m, attempts + 1));
                sim.report_counts.1 += 1;
                sim.transmit(now, &m);
                let rto = sim.channel.retransmit_timeout();
                sim.push(now + rto, SimEvent::Retransmit(owner, seq));
            }
        }
    }

    let replicas = [peers[0].replica(), peers[1].replica()];
    let converged = replicas[0].canonical_dump() == replicas[1].canonical_dump();
    let (messages, retransmissions, acks, dropped) = sim.report_counts;
    SessionReport {
        transcript,
        converged,
        divergence_detected: peers.iter().any(|p| p.diverged),
        replicas,
        messages,
        retransmissions,
        acks,
        dropped,
        end_time: now,
    }
}
