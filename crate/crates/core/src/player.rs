use std::fmt;
use std::str::FromStr;

/// One of the two seats in a session. `A` is the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlayerId {
    A,
    B,
}

impl PlayerId {
    pub const BOTH: [PlayerId; 2] = [PlayerId::A, PlayerId::B];

    pub fn index(self) -> usize {
        match self {
            PlayerId::A => 0,
            PlayerId::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(PlayerId::A),
            1 => Some(PlayerId::B),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            PlayerId::A => PlayerId::B,
            PlayerId::B => PlayerId::A,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            PlayerId::A => "a",
            PlayerId::B => "b",
        }
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for PlayerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "A" | "0" => Ok(PlayerId::A),
            "b" | "B" | "1" => Ok(PlayerId::B),
            other => Err(format!("unknown player '{other}'")),
        }
    }
}
