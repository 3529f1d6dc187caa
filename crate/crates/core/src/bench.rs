//! Throughput measurement of the frame pipeline on synthetic detections.

use std::time::Instant;

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{CameraIntrinsics, Pose};
use crate::observation::{ObservationFrame, TagObservation};
use crate::pose::SolverKind;
use crate::registry::Registry;
use crate::scene::{project_tag, ImageSize};
use crate::tracker::{track_frame, TrackerLifecycle};

/// `count` distinct registry tags, each at its own random in-view pose
/// 0.3–1.2 m from the camera and tilted 5–60 degrees.
pub fn synthetic_frame(registry: &Registry, k: &CameraIntrinsics, count: usize, seed: u64) -> ObservationFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = count.min(registry.len());
    let mut picked: Vec<usize> = sample(&mut rng, registry.len(), count).into_vec();
    picked.sort_unstable();
    let image = ImageSize::default();
    let mut observations = Vec::with_capacity(count);
    for i in picked {
        let spec = &registry.tags()[i];
        let side = spec.size_class.side_length();
        let corners = loop {
            let pose = random_tag_pose(&mut rng);
            if let Some(c) = project_tag(k, &pose, side, image) {
                break c;
            }
        };
        observations.push(TagObservation {
            tag_id: spec.tag_id,
            corners,
        });
    }
    ObservationFrame {
        timestamp: 0.0,
        observations,
    }
}

/// A tag pose facing the camera, with the given tilt range applied.
pub fn random_tag_pose<R: Rng>(rng: &mut R) -> Pose {
    let z = rng.random_range(0.3..1.2);
    let t = Vector3::new(rng.random_range(-0.3..0.3) * z, rng.random_range(-0.2..0.2) * z, z);
    let tilt = rng.random_range(5f64..60.0).to_radians();
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let spin = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let frontal = Pose::from_rodrigues(Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0), t);
    let tilt_axis = Vector3::new(azimuth.cos(), azimuth.sin(), 0.0) * tilt;
    let r = crate::geometry::Rotation::from_rodrigues(&tilt_axis)
        .compose(&frontal.rotation)
        .compose(&crate::geometry::Rotation::from_rodrigues(&Vector3::new(0.0, spin, 0.0)));
    Pose::new(r, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchStats {
    pub tags: usize,
    pub frames: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

impl BenchStats {
    pub fn fps(&self) -> f64 {
        1000.0 / self.median_ms
    }
}

/// Times `track_frame` on `frame`, once per iteration.
pub fn run_bench(
    registry: &Registry,
    k: &CameraIntrinsics,
    frame: &ObservationFrame,
    frames: usize,
    solver: SolverKind,
) -> BenchStats {
    let lifecycle = TrackerLifecycle::default();
    // One untimed pass to warm caches.
    std::hint::black_box(track_frame(&lifecycle, frame, registry, k, solver));
    let mut times: Vec<f64> = (0..frames.max(1))
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(track_frame(&lifecycle, frame, registry, k, solver));
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n = times.len();
    BenchStats {
        tags: frame.observations.len(),
        frames: n,
        median_ms: times[n / 2],
        p95_ms: times[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1],
        mean_ms: times.iter().sum::<f64>() / n as f64,
    }
}
