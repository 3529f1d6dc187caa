//! Planar fiducial tracking for tagged playing cards: per-tag pose solvers,
//! a tag database for marked decks and a calibration board, card pose fusion,
//! table calibration, a War game state machine and two-peer replication.
//!
//! Conventions used throughout:
//!
//! * Model space is (U, V, W) in meters. A tag or card lies in the V = 0
//!   plane with its printed face looking along -V.
//! * Camera space has Z forward, X right, Y down. Pixels are (x right, y down).
//! * `Pose` maps points from an object frame into a parent frame.

pub mod bench;
pub mod calibration;
pub mod game;
pub mod geometry;
pub mod observation;
pub mod player;
pub mod pose;
pub mod registry;
pub mod scene;
pub mod sync;
pub mod tracker;

pub use geometry::{CameraIntrinsics, Pixel, Pose, Rotation};
pub use player::PlayerId;
