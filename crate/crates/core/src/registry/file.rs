//! Line-oriented layout file.
//!
//! ```text
//! # cardtrack layout v1
//! deck <owner> <seed>
//! face <owner> <card> <rank> <suit>
//! <tag_id> <dictionary_id> <card> <side> <size_class> <offset_u> <offset_w> <rotation>
//! ```
//!
//! `<card>` is `<owner>:<index>` or `board`. Numbers are written in their
//! shortest round-trip decimal form, so load after save is bit-exact.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use nalgebra::Vector2;

use super::{
    BoardLayout, CardFace, CardRef, DeckLayout, Registry, RegistryError, Side, SizeClass, Suit,
    TagSpec, BOARD_TAGS, CARDS_PER_DECK, LARGE_TAGS_PER_SIDE, SMALL_TAGS_PER_SIDE, TAGS_PER_SIDE,
};
use crate::player::PlayerId;

pub const LAYOUT_HEADER: &str = "# cardtrack layout v1";

pub fn save_layout<W: Write>(registry: &Registry, mut sink: W) -> Result<(), RegistryError> {
    let io = |e: std::io::Error| RegistryError::Io(e.to_string());
    writeln!(sink, "{LAYOUT_HEADER}").map_err(io)?;
    for deck in registry.decks() {
        writeln!(sink, "deck {} {}", deck.owner, deck.seed).map_err(io)?;
        for (i, face) in deck.faces.iter().enumerate() {
            writeln!(sink, "face {} {} {} {}", deck.owner, i, face.rank, face.suit.code())
                .map_err(io)?;
        }
        for t in &deck.tags {
            write_tag(&mut sink, t).map_err(io)?;
        }
    }
    if let Some(board) = registry.board() {
        for t in &board.tags {
            write_tag(&mut sink, t).map_err(io)?;
        }
    }
    sink.flush().map_err(io)
}

fn write_tag<W: Write>(sink: &mut W, t: &TagSpec) -> std::io::Result<()> {
    writeln!(
        sink,
        "{} {} {} {} {} {} {} {}",
        t.tag_id,
        t.dictionary_id,
        t.card,
        t.side.code(),
        t.size_class.code(),
        t.offset.x,
        t.offset.y,
        t.rotation_in_card
    )
}

fn violation(line: usize, field: &str, message: impl Into<String>) -> RegistryError {
    RegistryError::SchemaViolation {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str, raw: &str) -> Result<T, RegistryError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| violation(line, field, format!("cannot parse '{raw}': {e}")))
}

struct DeckBuilder {
    line: usize,
    seed: u64,
    faces: Vec<Option<CardFace>>,
    tags: Vec<TagSpec>,
}

pub fn load_layout<R: BufRead>(source: R) -> Result<Registry, RegistryError> {
    let mut decks: BTreeMap<PlayerId, DeckBuilder> = BTreeMap::new();
    let mut deck_order = Vec::new();
    let mut board = Vec::new();
    let mut board_line = 0;
    let mut seen = HashSet::new();
    let mut header_seen = false;

    for (i, line) in source.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| RegistryError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !header_seen {
            if trimmed != LAYOUT_HEADER {
                return Err(violation(n, "header", format!("expected '{LAYOUT_HEADER}'")));
            }
            header_seen = true;
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match fields[0] {
            "deck" => {
                if fields.len() != 3 {
                    return Err(violation(n, "deck", "expected 'deck <owner> <seed>'"));
                }
                let owner: PlayerId = parse_field(n, "owner", fields[1])?;
                let seed: u64 = parse_field(n, "seed", fields[2])?;
                if decks.contains_key(&owner) {
                    return Err(violation(n, "owner", format!("deck {owner} declared twice")));
                }
                deck_order.push(owner);
                decks.insert(
                    owner,
                    DeckBuilder {
                        line: n,
                        seed,
                        faces: vec![None; CARDS_PER_DECK],
                        tags: Vec::new(),
                    },
                );
            }
            "face" => {
                if fields.len() != 5 {
                    return Err(violation(n, "face", "expected 'face <owner> <card> <rank> <suit>'"));
                }
                let owner: PlayerId = parse_field(n, "owner", fields[1])?;
                let card: usize = parse_field(n, "card", fields[2])?;
                let rank: u8 = parse_field(n, "rank", fields[3])?;
                let suit = Suit::from_code(fields[4])
                    .ok_or_else(|| violation(n, "suit", format!("unknown suit '{}'", fields[4])))?;
                if !(2..=14).contains(&rank) {
                    return Err(violation(n, "rank", format!("rank {rank} outside 2..=14")));
                }
                let deck = decks
                    .get_mut(&owner)
                    .ok_or_else(|| violation(n, "owner", format!("no deck declared for {owner}")))?;
                let slot = deck
                    .faces
                    .get_mut(card)
                    .ok_or_else(|| violation(n, "card", format!("card {card} out of range")))?;
                if slot.replace(CardFace { rank, suit }).is_some() {
                    return Err(violation(n, "card", format!("face for card {card} given twice")));
                }
            }
            _ => {
                let tag = parse_tag(n, &fields)?;
                if !seen.insert(tag.tag_id) {
                    return Err(violation(n, "tag_id", format!("duplicate tag id {}", tag.tag_id)));
                }
                match tag.card {
                    CardRef::Board => {
                        if board.is_empty() {
                            board_line = n;
                        }
                        board.push(tag);
                    }
                    CardRef::Deck { owner, .. } => decks
                        .get_mut(&owner)
                        .ok_or_else(|| violation(n, "card", format!("no deck declared for {owner}")))?
                        .tags
                        .push(tag),
                }
            }
        }
    }
    if !header_seen {
        return Err(violation(0, "header", "empty layout file"));
    }

    let mut out = Vec::with_capacity(deck_order.len());
    for owner in deck_order {
        let b = decks.remove(&owner).expect("declared deck");
        out.push(finish_deck(owner, b)?);
    }
    let board = if board.is_empty() {
        None
    } else {
        if board.len() != BOARD_TAGS {
            return Err(violation(
                board_line,
                "card",
                format!("board has {} tags, expected {BOARD_TAGS}", board.len()),
            ));
        }
        Some(BoardLayout { tags: board })
    };
    Registry::new(out, board)
}

fn parse_tag(n: usize, fields: &[&str]) -> Result<TagSpec, RegistryError> {
    if fields.len() != 8 {
        return Err(violation(
            n,
            "record",
            format!("expected 8 tag fields, found {}", fields.len()),
        ));
    }
    let tag_id: u32 = parse_field(n, "tag_id", fields[0])?;
    let dictionary_id: u8 = parse_field(n, "dictionary_id", fields[1])?;
    if dictionary_id > 2 {
        return Err(violation(n, "dictionary_id", format!("{dictionary_id} not in 0..=2")));
    }
    let card: CardRef = parse_field(n, "card", fields[2])?;
    let side: Side = parse_field(n, "side", fields[3])?;
    let size_class: SizeClass = parse_field(n, "size_class", fields[4])?;
    let offset_u: f64 = parse_field(n, "offset_u", fields[5])?;
    let offset_w: f64 = parse_field(n, "offset_w", fields[6])?;
    let rotation_in_card: f64 = parse_field(n, "rotation", fields[7])?;
    for (name, v) in [("offset_u", offset_u), ("offset_w", offset_w), ("rotation", rotation_in_card)] {
        if !v.is_finite() {
            return Err(violation(n, name, "value must be finite"));
        }
    }
    if card == CardRef::Board && side != Side::Front {
        return Err(violation(n, "side", "board tags must be on the front"));
    }
    if let CardRef::Deck { .. } = card {
        let half_diag = 0.5 * super::CARD_WIDTH.hypot(super::CARD_HEIGHT);
        if offset_u.hypot(offset_w) > half_diag {
            return Err(violation(n, "offset_u", "offset exceeds half the card diagonal"));
        }
    }
    Ok(TagSpec {
        tag_id,
        dictionary_id,
        card,
        side,
        size_class,
        offset: Vector2::new(offset_u, offset_w),
        rotation_in_card,
    })
}

fn finish_deck(owner: PlayerId, b: DeckBuilder) -> Result<DeckLayout, RegistryError> {
    let mut faces = Vec::with_capacity(CARDS_PER_DECK);
    for (card, f) in b.faces.into_iter().enumerate() {
        faces.push(f.ok_or_else(|| violation(b.line, "face", format!("missing face for card {card}")))?);
    }
    let mut counts = vec![[(0usize, 0usize); 2]; CARDS_PER_DECK];
    for t in &b.tags {
        if let CardRef::Deck { card, .. } = t.card {
            let side = match t.side {
                Side::Front => 0,
                Side::Back => 1,
            };
            let c = &mut counts[card as usize][side];
            match t.size_class {
                SizeClass::Small => c.0 += 1,
                SizeClass::Large => c.1 += 1,
            }
        }
    }
    for (card, sides) in counts.iter().enumerate() {
        for (s, &(small, large)) in sides.iter().enumerate() {
            if small + large != TAGS_PER_SIDE || small != SMALL_TAGS_PER_SIDE || large != LARGE_TAGS_PER_SIDE {
                let side = if s == 0 { "front" } else { "back" };
                return Err(violation(
                    b.line,
                    "card",
                    format!(
                        "card {owner}:{card} {side} has {small} small + {large} large tags, expected {SMALL_TAGS_PER_SIDE} + {LARGE_TAGS_PER_SIDE}"
                    ),
                ));
            }
        }
    }
    Ok(DeckLayout {
        owner,
        seed: b.seed,
        faces,
        tags: b.tags,
    })
}
