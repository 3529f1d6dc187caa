use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LifecycleEvent {
    SessionStart,
    FirstCardPickup,
    BoardRemoved,
}

impl LifecycleEvent {
    pub fn code(self) -> &'static str {
        match self {
            LifecycleEvent::SessionStart => "session-start",
            LifecycleEvent::FirstCardPickup => "first-card-pickup",
            LifecycleEvent::BoardRemoved => "board-removed",
        }
    }
}

impl fmt::Display for LifecycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LifecycleEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "session-start" => Ok(LifecycleEvent::SessionStart),
            "first-card-pickup" => Ok(LifecycleEvent::FirstCardPickup),
            "board-removed" => Ok(LifecycleEvent::BoardRemoved),
            other => Err(format!("unknown lifecycle event '{other}'")),
        }
    }
}

/// Which trackers are running. A fresh session has both enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackerLifecycle {
    pub card_tracker_enabled: bool,
    pub table_tracker_enabled: bool,
}

impl Default for TrackerLifecycle {
    fn default() -> Self {
        Self {
            card_tracker_enabled: true,
            table_tracker_enabled: true,
        }
    }
}

/// Once the first card is picked up the card tracker stays off until the
/// next `SessionStart`. All events are idempotent.
pub fn lifecycle_apply(state: TrackerLifecycle, event: LifecycleEvent) -> TrackerLifecycle {
    match event {
        LifecycleEvent::SessionStart => TrackerLifecycle::default(),
        LifecycleEvent::FirstCardPickup => TrackerLifecycle {
            card_tracker_enabled: false,
            ..state
        },
        LifecycleEvent::BoardRemoved => TrackerLifecycle {
            table_tracker_enabled: false,
            ..state
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use LifecycleEvent::*;

    fn run(events: &[LifecycleEvent]) -> TrackerLifecycle {
        events
            .iter()
            .fold(TrackerLifecycle::default(), |s, &e| lifecycle_apply(s, e))
    }

    #[test]
    fn pickup_disables_card_tracker_only() {
        let s = run(&[SessionStart, FirstCardPickup]);
        assert!(!s.card_tracker_enabled && s.table_tracker_enabled);
    }

    #[test]
    fn events_are_idempotent() {
        assert_eq!(run(&[FirstCardPickup, FirstCardPickup]), run(&[FirstCardPickup]));
        assert_eq!(run(&[BoardRemoved, BoardRemoved]), run(&[BoardRemoved]));
    }

    #[test]
    fn board_removed_before_pickup() {
        let s = run(&[SessionStart, BoardRemoved]);
        assert!(s.card_tracker_enabled && !s.table_tracker_enabled);
        let s = run(&[SessionStart, BoardRemoved, FirstCardPickup]);
        assert!(!s.card_tracker_enabled && !s.table_tracker_enabled);
    }

    #[test]
    fn stays_disabled_within_session() {
        let s = run(&[SessionStart, FirstCardPickup, BoardRemoved]);
        assert!(!s.card_tracker_enabled);
        assert!(run(&[FirstCardPickup, SessionStart]).card_tracker_enabled);
    }

    #[test]
    fn codes_round_trip() {
        for e in [SessionStart, FirstCardPickup, BoardRemoved] {
            assert_eq!(e.code().parse::<LifecycleEvent>().unwrap(), e);
        }
    }
}
