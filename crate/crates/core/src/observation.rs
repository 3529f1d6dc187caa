//! Detected tags and the observation trace interchange format.
//!
//! ```text
//! # cardtrack observations v1
//! frame <timestamp>
//! <timestamp> <tag_id> <x0> <y0> <x1> <y1> <x2> <y2> <x3> <y3>
//! event <timestamp> <session-start|first-card-pickup|board-removed>
//! ```
//!
//! A `frame` line opens a frame so that frames without detections survive a
//! round trip. Observation lines whose timestamp differs from the open frame
//! start a new frame implicitly. Corners follow the canonical model order.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::geometry::Pixel;
use crate::tracker::LifecycleEvent;

pub const OBSERVATION_HEADER: &str = "# cardtrack observations v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagObservation {
    pub tag_id: u32,
    pub corners: [Pixel; 4],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationFrame {
    pub timestamp: f64,
    pub observations: Vec<TagObservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceItem {
    Frame(ObservationFrame),
    Event { time: f64, event: LifecycleEvent },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

fn format_err(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Format {
        line,
        message: message.into(),
    }
}

pub fn write_trace<W: Write>(items: &[TraceItem], mut sink: W) -> Result<(), TraceError> {
    let io = |e: std::io::Error| TraceError::Io(e.to_string());
    writeln!(sink, "{OBSERVATION_HEADER}").map_err(io)?;
    for item in items {
        match item {
            TraceItem::Frame(frame) => {
                writeln!(sink, "frame {}", frame.timestamp).map_err(io)?;
                for o in &frame.observations {
                    write!(sink, "{} {}", frame.timestamp, o.tag_id).map_err(io)?;
                    for c in &o.corners {
                        write!(sink, " {} {}", c.x, c.y).map_err(io)?;
                    }
                    writeln!(sink).map_err(io)?;
                }
            }
            TraceItem::Event { time, event } => {
                writeln!(sink, "event {time} {}", event.code()).map_err(io)?;
            }
        }
    }
    sink.flush().map_err(io)
}

pub fn read_trace<R: BufRead>(source: R) -> Result<Vec<TraceItem>, TraceError> {
    let mut items = Vec::new();
    let mut current: Option<ObservationFrame> = None;
    let mut header_seen = false;

    let parse_f64 = |line: usize, what: &str, raw: &str| -> Result<f64, TraceError> {
        let v: f64 = raw
            .parse()
            .map_err(|_| format_err(line, format!("bad {what} '{raw}'")))?;
        if !v.is_finite() {
            return Err(format_err(line, format!("{what} must be finite")));
        }
        Ok(v)
    };

    for (i, line) in source.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !header_seen {
            if trimmed != OBSERVATION_HEADER {
                return Err(format_err(n, format!("expected header '{OBSERVATION_HEADER}'")));
            }
            header_seen = true;
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match fields[0] {
            "frame" => {
                if fields.len() != 2 {
                    return Err(format_err(n, "expected 'frame <timestamp>'"));
                }
                let t = parse_f64(n, "timestamp", fields[1])?;
                if let Some(f) = current.take() {
                    items.push(TraceItem::Frame(f));
                }
                current = Some(ObservationFrame {
                    timestamp: t,
                    observations: Vec::new(),
                });
            }
            "event" => {
                if fields.len() != 3 {
                    return Err(format_err(n, "expected 'event <timestamp> <kind>'"));
                }
                let time = parse_f64(n, "timestamp", fields[1])?;
                let event: LifecycleEvent = fields[2].parse().map_err(|e: String| format_err(n, e))?;
                if let Some(f) = current.take() {
                    items.push(TraceItem::Frame(f));
                }
                items.push(TraceItem::Event { time, event });
            }
            _ => {
                if fields.len() != 10 {
                    return Err(format_err(
                        n,
                        format!("expected 10 observation fields, found {}", fields.len()),
                    ));
                }
                let t = parse_f64(n, "timestamp", fields[0])?;
                let tag_id: u32 = fields[1]
                    .parse()
                    .map_err(|_| format_err(n, format!("bad tag id '{}'", fields[1])))?;
                let mut coords = [0.0; 8];
                for (k, c) in coords.iter_mut().enumerate() {
                    *c = parse_f64(n, "corner coordinate", fields[2 + k])?;
                }
                let corners = std::array::from_fn(|k| Pixel::new(coords[2 * k], coords[2 * k + 1]));
                let same_frame = current.as_ref().is_some_and(|f| f.timestamp == t);
                if !same_frame {
                    if let Some(f) = current.take() {
                        items.push(TraceItem::Frame(f));
                    }
                    current = Some(ObservationFrame {
                        timestamp: t,
                        observations: Vec::new(),
                    });
                }
                current
                    .as_mut()
                    .expect("open frame")
                    .observations
                    .push(TagObservation { tag_id, corners });
            }
        }
    }
    if let Some(f) = current.take() {
        items.push(TraceItem::Frame(f));
    }
    if !header_seen {
        return Err(format_err(0, "empty observation trace"));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceItem> {
        vec![
            TraceItem::Frame(ObservationFrame {
                timestamp: 0.0,
                observations: vec![TagObservation {
                    tag_id: 12,
                    corners: [
                        Pixel::new(1.5, 2.25),
                        Pixel::new(10.0 / 3.0, 4.0),
                        Pixel::new(-0.1, 1e-17),
                        Pixel::new(1919.999, 0.0),
                    ],
                }],
            }),
            TraceItem::Event {
                time: 1.0 / 30.0,
                event: LifecycleEvent::FirstCardPickup,
            },
            TraceItem::Frame(ObservationFrame {
                timestamp: 1.0 / 30.0,
                observations: vec![],
            }),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let mut buf = Vec::new();
        write_trace(&sample(), &mut buf).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn implicit_frames_from_timestamps() {
        let text = format!(
            "{OBSERVATION_HEADER}\n0.5 1 0 0 1 0 1 1 0 1\n0.5 2 0 0 1 0 1 1 0 1\n0.6 3 0 0 1 0 1 1 0 1\n"
        );
        let items = read_trace(text.as_bytes()).unwrap();
        assert_eq!(items.len(), 2);
        match &items[0] {
            TraceItem::Frame(f) => assert_eq!(f.observations.len(), 2),
            _ => panic!(),
        }
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let text = format!("{OBSERVATION_HEADER}\nframe 0\n0 1 2 3\n");
        assert_eq!(
            read_trace(text.as_bytes()),
            Err(TraceError::Format {
                line: 3,
                message: "expected 10 observation fields, found 4".into()
            })
        );
    }
}
