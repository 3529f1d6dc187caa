//! Deck and board marker layouts, and the tag database built from them.
//!
//! Every physical card carries 28 tags per face: 26 small tags around the
//! border and 2 large tags in the middle. Each tag stores the vector from its
//! center to the card center so that a single visible tag is enough to place
//! the whole card.
//!
//! Tag ids live in one global space. A player's deck occupies
//! `[owner * 3000, owner * 3000 + 2912)`, split across three dictionaries of
//! 1000 markers; the calibration board takes the reserved block
//! `[2912, 2947)`. A player's tracker only loads its own deck plus the board,
//! which stays within a 3000-marker budget.

mod file;

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use file::{load_layout, save_layout, LAYOUT_HEADER};

use crate::geometry::{canonical_tag_corners, Pose, Rotation};
use crate::player::PlayerId;

pub const INCH: f64 = 0.0254;
pub const CARD_WIDTH: f64 = 0.0635;
pub const CARD_HEIGHT: f64 = 0.0889;
pub const CARDS_PER_DECK: usize = 52;
pub const TAGS_PER_SIDE: usize = 28;
pub const SMALL_TAGS_PER_SIDE: usize = 26;
pub const LARGE_TAGS_PER_SIDE: usize = 2;
pub const TAGS_PER_DECK: usize = CARDS_PER_DECK * 2 * TAGS_PER_SIDE;
pub const BOARD_COLUMNS: usize = 7;
pub const BOARD_ROWS: usize = 5;
pub const BOARD_TAGS: usize = BOARD_COLUMNS * BOARD_ROWS;
pub const BOARD_WIDTH: f64 = 11.0 * INCH;
pub const BOARD_HEIGHT: f64 = 8.5 * INCH;
/// Markers available to one tracker across its three dictionaries.
pub const TAG_BUDGET: usize = 3000;
pub const DICTIONARY_SIZE: u32 = 1000;
pub const BOARD_ID_BASE: u32 = TAGS_PER_DECK as u32;

/// Gap between the card edge and the outer edge of a border tag.
const BORDER_MARGIN: f64 = 0.0015;
/// Distance of each large tag center from the card center, along W.
const LARGE_TAG_OFFSET: f64 = 0.013;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown tag id {0}")]
    UnknownTag(u32),
    #[error("duplicate tag id {0}")]
    DuplicateTag(u32),
    #[error("schema violation at line {line}, field '{field}': {message}")]
    SchemaViolation {
        line: usize,
        field: String,
        message: String,
    },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeClass {
    Small,
    Large,
}

impl SizeClass {
    /// Printed edge length in meters.
    pub fn side_length(self) -> f64 {
        match self {
            SizeClass::Small => 0.3 * INCH,
            // Three times the small model scale.
            SizeClass::Large => 3.0 * (0.3 * INCH),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Large => "large",
        }
    }
}

impl FromStr for SizeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(SizeClass::Small),
            "large" => Ok(SizeClass::Large),
            other => Err(format!("unknown size class '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Front,
    Back,
}

impl Side {
    pub fn code(self) -> &'static str {
        match self {
            Side::Front => "front",
            Side::Back => "back",
        }
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front" => Ok(Side::Front),
            "back" => Ok(Side::Back),
            other => Err(format!("unknown side '{other}'")),
        }
    }
}

/// What a tag is printed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CardRef {
    Deck { owner: PlayerId, card: u8 },
    Board,
}

impl fmt::Display for CardRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CardRef::Deck { owner, card } => write!(f, "{owner}:{card}"),
            CardRef::Board => f.write_str("board"),
        }
    }
}

impl FromStr for CardRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "board" {
            return Ok(CardRef::Board);
        }
        let (owner, card) = s
            .split_once(':')
            .ok_or_else(|| format!("expected '<owner>:<card>' or 'board', got '{s}'"))?;
        let owner: PlayerId = owner.parse()?;
        let card: u8 = card.parse().map_err(|_| format!("bad card index '{card}'"))?;
        if card as usize >= CARDS_PER_DECK {
            return Err(format!("card index {card} out of range"));
        }
        Ok(CardRef::Deck { owner, card })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagSpec {
    pub tag_id: u32,
    pub dictionary_id: u8,
    pub card: CardRef,
    pub side: Side,
    pub size_class: SizeClass,
    /// Card center minus tag center, in card-plane (U, W) coordinates.
    pub offset: Vector2<f64>,
    /// In-plane rotation of the tag about the card normal.
    pub rotation_in_card: f64,
}

impl TagSpec {
    pub fn center_in_card(&self) -> Vector2<f64> {
        -self.offset
    }

    /// Pose of the tag frame in the card frame. Back-face tags are flipped
    /// half a turn about W so their printed face looks along +V.
    pub fn tag_in_card(&self) -> Pose {
        let spin = Rotation::from_rodrigues(&Vector3::new(0.0, self.rotation_in_card, 0.0));
        let rotation = match self.side {
            Side::Front => spin,
            Side::Back => Rotation::from_rodrigues(&Vector3::new(0.0, 0.0, PI)).compose(&spin),
        };
        let c = self.center_in_card();
        Pose::new(rotation, Vector3::new(c.x, 0.0, c.y))
    }

    pub fn corners_in_card(&self) -> [Point3<f64>; 4] {
        let pose = self.tag_in_card();
        canonical_tag_corners(self.size_class.side_length()).map(|p| pose.transform_point(&p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suit {
    Clubs,
    Diamonds,
    Hearts,
    Spades,
}

impl Suit {
    pub const ALL: [Suit; 4] = [Suit::Clubs, Suit::Diamonds, Suit::Hearts, Suit::Spades];

    pub fn code(self) -> char {
        match self {
            Suit::Clubs => 'c',
            Suit::Diamonds => 'd',
            Suit::Hearts => 'h',
            Suit::Spades => 's',
        }
    }

    pub fn from_code(c: &str) -> Option<Suit> {
        Suit::ALL.into_iter().find(|s| c.len() == 1 && c.starts_with(s.code()))
    }
}

/// Rank 2..=14 (ace high) and suit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CardFace {
    pub rank: u8,
    pub suit: Suit,
}

impl CardFace {
    /// The standard ordering: index / 13 selects the suit, index % 13 the rank.
    pub fn standard(index: usize) -> CardFace {
        CardFace {
            rank: 2 + (index % 13) as u8,
            suit: Suit::ALL[index / 13],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeckLayout {
    pub owner: PlayerId,
    pub seed: u64,
    /// Virtual face bound to each physical card id.
    pub faces: Vec<CardFace>,
    /// 52 cards x 2 sides x 28 tags, ordered by tag id.
    pub tags: Vec<TagSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardLayout {
    pub tags: Vec<TagSpec>,
}

/// Tag centers (U, W) and in-card rotations for one face, border tags first.
fn face_pattern() -> Vec<(Vector2<f64>, SizeClass, f64)> {
    let small = SizeClass::Small.side_length();
    let a = 0.5 * CARD_WIDTH - BORDER_MARGIN - 0.5 * small;
    let b = 0.5 * CARD_HEIGHT - BORDER_MARGIN - 0.5 * small;
    // Corner, then the interior tags of the edge that follows it, walking
    // counter-clockwise from (-a, -b).
    let corners = [(-a, -b), (a, -b), (a, b), (-a, b)];
    let interior = [4usize, 7, 4, 7];
    let spins = [0.0, FRAC_PI_2, PI, -FRAC_PI_2];

    let mut out = Vec::with_capacity(TAGS_PER_SIDE);
    for edge in 0..4 {
        let (x0, y0) = corners[edge];
        let (x1, y1) = corners[(edge + 1) % 4];
        let n = interior[edge];
        out.push((Vector2::new(x0, y0), SizeClass::Small, spins[edge]));
        for i in 1..=n {
            let f = i as f64 / (n + 1) as f64;
            out.push((
                Vector2::new(x0 + (x1 - x0) * f, y0 + (y1 - y0) * f),
                SizeClass::Small,
                spins[edge],
            ));
        }
    }
    debug_assert_eq!(out.len(), SMALL_TAGS_PER_SIDE);
    out.push((Vector2::new(0.0, -LARGE_TAG_OFFSET), SizeClass::Large, 0.0));
    out.push((Vector2::new(0.0, LARGE_TAG_OFFSET), SizeClass::Large, 0.0));
    out
}

fn dictionary_of(tag_id: u32) -> u8 {
    ((tag_id % TAG_BUDGET as u32) / DICTIONARY_SIZE) as u8
}

pub fn deck_id_base(owner: PlayerId) -> u32 {
    owner.index() as u32 * TAG_BUDGET as u32
}

pub fn generate_deck_layout(deck_seed: u64, owner: PlayerId) -> DeckLayout {
    let pattern = face_pattern();
    let base = deck_id_base(owner);
    let mut tags = Vec::with_capacity(TAGS_PER_DECK);
    for card in 0..CARDS_PER_DECK {
        for (s, side) in [Side::Front, Side::Back].into_iter().enumerate() {
            for (k, (center, size_class, spin)) in pattern.iter().enumerate() {
                let tag_id = base + ((card * 2 + s) * TAGS_PER_SIDE + k) as u32;
                // Seen from behind, the front pattern appears mirrored in U.
                let center = match side {
                    Side::Front => *center,
                    Side::Back => Vector2::new(-center.x, center.y),
                };
                tags.push(TagSpec {
                    tag_id,
                    dictionary_id: dictionary_of(tag_id),
                    card: CardRef::Deck {
                        owner,
                        card: card as u8,
                    },
                    side,
                    size_class: *size_class,
                    offset: -center,
                    rotation_in_card: *spin,
                });
            }
        }
    }

    let mut faces: Vec<CardFace> = (0..CARDS_PER_DECK).map(CardFace::standard).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(deck_seed ^ (0x5eed_0000 + owner.index() as u64));
    faces.shuffle(&mut rng);

    DeckLayout {
        owner,
        seed: deck_seed,
        faces,
        tags,
    }
}

pub fn generate_board_layout() -> BoardLayout {
    let pitch_u = BOARD_WIDTH / BOARD_COLUMNS as f64;
    let pitch_w = BOARD_HEIGHT / BOARD_ROWS as f64;
    let mut tags = Vec::with_capacity(BOARD_TAGS);
    for row in 0..BOARD_ROWS {
        for col in 0..BOARD_COLUMNS {
            let u = (col as f64 - (BOARD_COLUMNS as f64 - 1.0) / 2.0) * pitch_u;
            let w = (row as f64 - (BOARD_ROWS as f64 - 1.0) / 2.0) * pitch_w;
            let tag_id = BOARD_ID_BASE + (row * BOARD_COLUMNS + col) as u32;
            tags.push(TagSpec {
                tag_id,
                dictionary_id: dictionary_of(tag_id),
                card: CardRef::Board,
                side: Side::Front,
                size_class: SizeClass::Small,
                offset: Vector2::new(-u, -w),
                rotation_in_card: 0.0,
            });
        }
    }
    BoardLayout { tags }
}

/// Immutable tag database over some decks and, optionally, the board.
#[derive(Debug, Clone)]
pub struct Registry {
    decks: Vec<DeckLayout>,
    board: Option<BoardLayout>,
    tags: Vec<TagSpec>,
    index: HashMap<u32, usize>,
}

impl PartialEq for Registry {
    fn eq(&self, other: &Self) -> bool {
        self.decks == other.decks && self.board == other.board
    }
}

impl Registry {
    pub fn new(decks: Vec<DeckLayout>, board: Option<BoardLayout>) -> Result<Self, RegistryError> {
        let tags: Vec<TagSpec> = decks
            .iter()
            .flat_map(|d| d.tags.iter().copied())
            .chain(board.iter().flat_map(|b| b.tags.iter().copied()))
            .collect();
        let mut index = HashMap::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.tag_id, i).is_some() {
                return Err(RegistryError::DuplicateTag(t.tag_id));
            }
        }
        Ok(Self {
            decks,
            board,
            tags,
            index,
        })
    }

    /// Both player decks plus the board.
    pub fn full(seed: u64) -> Self {
        let decks = PlayerId::BOTH
            .iter()
            .map(|&p| generate_deck_layout(seed, p))
            .collect();
        Self::new(decks, Some(generate_board_layout())).expect("generated ids are disjoint")
    }

    /// What one player's tracker loads: its own deck and the board.
    pub fn local(seed: u64, owner: PlayerId) -> Self {
        Self::new(
            vec![generate_deck_layout(seed, owner)],
            Some(generate_board_layout()),
        )
        .expect("generated ids are disjoint")
    }

    /// Sub-registry for one player's tracker.
    pub fn restrict_to(&self, owner: PlayerId) -> Result<Self, RegistryError> {
        let decks = self.decks.iter().filter(|d| d.owner == owner).cloned().collect();
        Self::new(decks, self.board.clone())
    }

    pub fn lookup_tag(&self, tag_id: u32) -> Result<&TagSpec, RegistryError> {
        self.index
            .get(&tag_id)
            .map(|&i| &self.tags[i])
            .ok_or(RegistryError::UnknownTag(tag_id))
    }

    pub fn tags(&self) -> &[TagSpec] {
        &self.tags
    }

    pub fn decks(&self) -> &[DeckLayout] {
        &self.decks
    }

    pub fn deck(&self, owner: PlayerId) -> Option<&DeckLayout> {
        self.decks.iter().find(|d| d.owner == owner)
    }

    pub fn board(&self) -> Option<&BoardLayout> {
        self.board.as_ref()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Tags printed on one card (or the board).
    pub fn tags_on(&self, card: CardRef) -> impl Iterator<Item = &TagSpec> {
        self.tags.iter().filter(move |t| t.card == card)
    }
}
