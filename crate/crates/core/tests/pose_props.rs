use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use cardtrack::bench::random_tag_pose;
use cardtrack::geometry::{canonical_tag_corners, project_point, CameraIntrinsics, ModelPoint, Pixel, Pose, Rotation};
use cardtrack::pose::{
    dlt_solve, ippe_solve, lm_refine, params_of, refine_points, residuals_and_jacobian, LmConfig, PoseError,
};
use cardtrack::registry::SizeClass;
use cardtrack::scene::{project_tag, ImageSize};

const SMALL: f64 = 0.3 * 0.0254;
const LARGE: f64 = 0.9 * 0.0254;

fn render(k: &CameraIntrinsics, pose: &Pose, side: f64) -> [Pixel; 4] {
    let model = canonical_tag_corners(side);
    std::array::from_fn(|i| project_point(k, &pose.transform_point(&model[i])).unwrap())
}

/// A random tilted in-view tag pose and its noise-free corners.
fn case(seed: u64, side: f64) -> (Pose, [Pixel; 4]) {
    let k = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let pose = random_tag_pose(&mut rng);
        if let Some(px) = project_tag(&k, &pose, side, ImageSize::default()) {
            return (pose, px);
        }
    }
}

fn noisy(px: &[Pixel; 4], sigma: f64, rng: &mut ChaCha8Rng) -> [Pixel; 4] {
    let n = Normal::new(0.0, sigma).unwrap();
    px.map(|p| Pixel::new(p.x + n.sample(rng), p.y + n.sample(rng)))
}

fn frontal(tilt_deg: f64) -> Rotation {
    Rotation::from_rodrigues(&Vector3::new(90f64.to_radians() + tilt_deg.to_radians(), 0.0, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ippe_recovers_tilted_poses(seed in any::<u64>(), large in any::<bool>()) {
        let side = if large { LARGE } else { SMALL };
        let (truth, px) = case(seed, side);
        let sol = ippe_solve(&CameraIntrinsics::default(), side, &px).unwrap();
        let (r, t) = sol.best.distance(&truth);
        prop_assert!(r < 1e-6 && t < 1e-6, "{} rad {} m", r, t);
    }

    #[test]
    fn ippe_candidates_are_ranked_and_in_front(seed in any::<u64>(), sigma in 0.0f64..1.0) {
        let k = CameraIntrinsics::default();
        let (_, clean) = case(seed, LARGE);
        let px = noisy(&clean, sigma, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let sol = ippe_solve(&k, LARGE, &px).unwrap();
        let model = canonical_tag_corners(LARGE);
        let mut poses = vec![sol.best];
        if let (Some(alt), Some(e)) = (sol.alternate, sol.alternate_error) {
            prop_assert!(sol.best_error <= e);
            poses.push(alt);
        }
        for pose in poses {
            for m in &model {
                prop_assert!(pose.transform_point(m).z > 0.0);
            }
            // Corner order survives: each reprojected corner is closest to its own observation.
            let re = render(&k, &pose, LARGE);
            for (i, r) in re.iter().enumerate() {
                let nearest = (0..4)
                    .min_by(|&a, &b| (px[a] - r).norm().total_cmp(&(px[b] - r).norm()))
                    .unwrap();
                prop_assert_eq!(nearest, i);
            }
        }
    }

    #[test]
    fn solvers_agree_without_noise(seed in any::<u64>()) {
        let k = CameraIntrinsics::default();
        let (truth, px) = case(seed, LARGE);
        let ippe = ippe_solve(&k, LARGE, &px).unwrap().best;
        let dlt = dlt_solve(&k, LARGE, &px).unwrap();
        let lm = lm_refine(&k, LARGE, &px, &dlt, &LmConfig::default()).unwrap().pose;
        for (a, b) in [(ippe, dlt), (ippe, lm), (dlt, lm), (lm, truth)] {
            let (r, t) = a.distance(&b);
            prop_assert!(r < 1e-4 && t < 1e-4);
        }
    }

    #[test]
    fn lm_never_increases_error(seed in any::<u64>(), sigma in 0.1f64..2.0) {
        let k = CameraIntrinsics::default();
        let (_, clean) = case(seed, LARGE);
        let px = noisy(&clean, sigma, &mut ChaCha8Rng::seed_from_u64(seed));
        let Ok(init) = dlt_solve(&k, LARGE, &px) else { return Ok(()) };
        let out = lm_refine(&k, LARGE, &px, &init, &LmConfig::default()).unwrap();
        prop_assert!(out.final_error <= out.initial_error);
    }

    #[test]
    fn jacobian_matches_central_differences(seed in any::<u64>()) {
        let k = CameraIntrinsics::default();
        let (truth, px) = case(seed, LARGE);
        let model = canonical_tag_corners(LARGE);
        let mut p = params_of(&truth);
        p[0] += 0.01;
        p[5] += 0.002;
        let (_, jac) = residuals_and_jacobian(&k, &model, &px, &p).unwrap();
        let mut fd = jac;
        for j in 0..6 {
            let h = 1e-6;
            let (mut hi, mut lo) = (p, p);
            hi[j] += h;
            lo[j] -= h;
            let rh = residuals_and_jacobian(&k, &model, &px, &hi).unwrap().0;
            let rl = residuals_and_jacobian(&k, &model, &px, &lo).unwrap().0;
            fd.set_column(j, &((rh - rl) / (2.0 * h)));
        }
        prop_assert!((jac - fd).norm() / fd.norm() < 1e-4);
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>()) {
        let k = CameraIntrinsics::default();
        let (_, px) = case(seed, SMALL);
        prop_assert_eq!(ippe_solve(&k, SMALL, &px).unwrap(), ippe_solve(&k, SMALL, &px).unwrap());
    }
}

#[test]
fn noise_error_shrinks_with_tag_size() {
    let k = CameraIntrinsics::default();
    let mut medians = Vec::new();
    for size in [SizeClass::Small, SizeClass::Large] {
        let side = size.side_length();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let truth = Pose::new(frontal(30.0), Vector3::new(0.02, 0.01, 0.5));
        let clean = render(&k, &truth, side);
        let mut errors: Vec<f64> = (0..1000)
            .filter_map(|_| ippe_solve(&k, side, &noisy(&clean, 0.5, &mut rng)).ok())
            .map(|s| s.best.rotation.angle_to(&truth.rotation))
            .collect();
        assert_eq!(errors.len(), 1000);
        errors.sort_by(f64::total_cmp);
        medians.push(errors[500]);
    }
    assert!(medians.iter().all(|m| m.is_finite()));
    assert!(medians[1] < medians[0], "{medians:?}");
}

#[test]
fn ambiguity_flag_follows_tilt() {
    let k = CameraIntrinsics::default();
    let flat = Pose::new(frontal(0.0), Vector3::new(0.0, 0.0, 0.3));
    assert!(ippe_solve(&k, LARGE, &render(&k, &flat, LARGE)).unwrap().ambiguous);
    let tilted = Pose::new(frontal(15.0), Vector3::new(0.0, 0.0, 0.3));
    let sol = ippe_solve(&k, LARGE, &render(&k, &tilted, LARGE)).unwrap();
    assert!(!sol.ambiguous, "{sol:?}");
}

#[test]
fn refine_points_validates_input() {
    let k = CameraIntrinsics::default();
    let model: Vec<ModelPoint> = canonical_tag_corners(LARGE).to_vec();
    let truth = Pose::new(frontal(20.0), Vector3::new(0.0, 0.0, 0.4));
    let px = render(&k, &truth, LARGE).to_vec();
    assert_eq!(
        refine_points(&k, &model[..2], &px[..2], &truth, &LmConfig::default()),
        Err(PoseError::DegenerateConfiguration)
    );
    assert_eq!(
        refine_points(&k, &model, &px[..3], &truth, &LmConfig::default()),
        Err(PoseError::DegenerateConfiguration)
    );
    let behind = Pose::new(truth.rotation, -truth.translation);
    assert_eq!(
        refine_points(&k, &model, &px, &behind, &LmConfig::default()),
        Err(PoseError::NoValidPose)
    );
    let out = refine_points(&k, &model, &px, &truth, &LmConfig::default()).unwrap();
    assert!(out.final_error < 1e-9);
}

#[test]
fn solvers_reject_bad_input() {
    let k = CameraIntrinsics::default();
    let px = [Pixel::new(10.0, 10.0); 4];
    assert!(matches!(ippe_solve(&k, LARGE, &px), Err(PoseError::DegenerateConfiguration)));
    assert!(matches!(dlt_solve(&k, LARGE, &px), Err(PoseError::DegenerateConfiguration)));
    let good = render(&k, &Pose::new(frontal(20.0), Vector3::new(0.0, 0.0, 0.4)), LARGE);
    assert!(matches!(ippe_solve(&k, 0.0, &good), Err(PoseError::InvalidSize(_))));
    assert!(matches!(dlt_solve(&k, -1.0, &good), Err(PoseError::InvalidSize(_))));
}
