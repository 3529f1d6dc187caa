//! Levenberg–Marquardt refinement of a single tag pose over 6 parameters
//! (Rodrigues vector, translation).

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::PoseError;
use crate::geometry::{canonical_tag_corners, CameraIntrinsics, ModelPoint, Pixel, Pose, Rotation};

pub type Residuals = SVector<f64, 8>;
pub type Jacobian = SMatrix<f64, 8, 6>;
pub type Params = SVector<f64, 6>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iters: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    Gradient,
    Step,
    /// Damping grew without finding a cost decrease.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmResult {
    pub pose: Pose,
    /// RMS pixel residuals before and after refinement.
    pub initial_error: f64,
    pub final_error: f64,
    pub iterations: usize,
    pub termination: Termination,
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

pub fn params_of(pose: &Pose) -> Params {
    let r = pose.rotation.to_rodrigues();
    let t = pose.translation;
    Params::new(r.x, r.y, r.z, t.x, t.y, t.z)
}

pub fn pose_of(params: &Params) -> Pose {
    Pose::from_rodrigues(
        Vector3::new(params[0], params[1], params[2]),
        Vector3::new(params[3], params[4], params[5]),
    )
}

/// Derivative of `R(omega) * p` with respect to each component of `omega`,
/// given `rp = R(omega) * p` (Gallego & Yezzi's compact form).
fn rotated_point_derivative(omega: &Vector3<f64>, rot: &Matrix3<f64>, rp: &Vector3<f64>, p: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let mut d = Matrix3::zeros();
    for i in 0..3 {
        let col = if theta2 < 1e-16 {
            Vector3::ith(i, 1.0).cross(p)
        } else {
            let e_i = Vector3::ith(i, 1.0);
            let v = omega.cross(&(e_i - rot.column(i)));
            (omega.cross(rp) * omega[i] + v.cross(rp)) / theta2
        };
        d.set_column(i, &col);
    }
    d
}

/// Pixel residuals (projection minus observation) and their analytic
/// Jacobian. `None` when a point is not in front of the camera.
pub fn residuals_and_jacobian(
    k: &CameraIntrinsics,
    model: &[ModelPoint; 4],
    observed: &[Pixel; 4],
    params: &Params,
) -> Option<(Residuals, Jacobian)> {
    let omega = Vector3::new(params[0], params[1], params[2]);
    let t = Vector3::new(params[3], params[4], params[5]);
    let rot = Rotation::from_rodrigues(&omega);
    let r = rot.matrix();
    let mut res = Residuals::zeros();
    let mut jac = Jacobian::zeros();
    for (i, (m, o)) in model.iter().zip(observed).enumerate() {
        let rp = r * m.coords;
        let c = rp + t;
        if !(c.z > 0.0) {
            return None;
        }
        let iz = 1.0 / c.z;
        res[2 * i] = k.fx * c.x * iz + k.cx - o.x;
        res[2 * i + 1] = k.fy * c.y * iz + k.cy - o.y;

        let dproj = SMatrix::<f64, 2, 3>::new(
            k.fx * iz,
            0.0,
            -k.fx * c.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * c.y * iz * iz,
        );
        let drot = rotated_point_derivative(&omega, r, &rp, &m.coords);
        jac.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&(dproj * drot));
        jac.fixed_view_mut::<2, 3>(2 * i, 3).copy_from(&dproj);
    }
    Some((res, jac))
}

fn point_residual(k: &CameraIntrinsics, pose: &Pose, m: &ModelPoint, o: &Pixel) -> Option<(f64, f64)> {
    let c = pose.transform_point(m);
    if !(c.z > 0.0) {
        return None;
    }
    Some((k.fx * c.x / c.z + k.cx - o.x, k.fy * c.y / c.z + k.cy - o.y))
}

fn cost_of(k: &CameraIntrinsics, model: &[ModelPoint], observed: &[Pixel], params: &Params) -> Option<f64> {
    let pose = pose_of(params);
    let mut sum = 0.0;
    for (m, o) in model.iter().zip(observed) {
        let (rx, ry) = point_residual(k, &pose, m, o)?;
        sum += rx * rx + ry * ry;
    }
    Some(sum)
}

/// Accumulates JᵀJ and Jᵀr over all points.
fn normal_equations(
    k: &CameraIntrinsics,
    model: &[ModelPoint],
    observed: &[Pixel],
    params: &Params,
) -> Option<(SMatrix<f64, 6, 6>, Params)> {
    let omega = Vector3::new(params[0], params[1], params[2]);
    let t = Vector3::new(params[3], params[4], params[5]);
    let rot = Rotation::from_rodrigues(&omega);
    let r = rot.matrix();
    let mut jtj = SMatrix::<f64, 6, 6>::zeros();
    let mut jtr = Params::zeros();
    for (m, o) in model.iter().zip(observed) {
        let rp = r * m.coords;
        let c = rp + t;
        if !(c.z > 0.0) {
            return None;
        }
        let iz = 1.0 / c.z;
        let res = nalgebra::Vector2::new(k.fx * c.x * iz + k.cx - o.x, k.fy * c.y * iz + k.cy - o.y);
        let dproj = SMatrix::<f64, 2, 3>::new(
            k.fx * iz,
            0.0,
            -k.fx * c.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * c.y * iz * iz,
        );
        let mut j = SMatrix::<f64, 2, 6>::zeros();
        j.fixed_view_mut::<2, 3>(0, 0)
            .copy_from(&(dproj * rotated_point_derivative(&omega, r, &rp, &m.coords)));
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&dproj);
        jtj += j.transpose() * j;
        jtr += j.transpose() * res;
    }
    Some((jtj, jtr))
}

/// Refines `initial`; the returned error never exceeds the initial error.
pub fn lm_refine(
    k: &CameraIntrinsics,
    side: f64,
    pixels: &[Pixel; 4],
    initial: &Pose,
    config: &LmConfig,
) -> Result<LmResult, PoseError> {
    if !(side.is_finite() && side > 0.0) {
        return Err(PoseError::InvalidSize(side));
    }
    refine_points(k, &canonical_tag_corners(side), pixels, initial, config)
}

/// Levenberg–Marquardt over any set of rigidly attached model points, e.g.
/// every corner of a multi-tag board.
pub fn refine_points(
    k: &CameraIntrinsics,
    model: &[ModelPoint],
    observed: &[Pixel],
    initial: &Pose,
    config: &LmConfig,
) -> Result<LmResult, PoseError> {
    if model.len() != observed.len() || model.len() < 3 {
        return Err(PoseError::DegenerateConfiguration);
    }
    let n = model.len() as f64;
    let mut x = params_of(initial);
    let initial_cost = cost_of(k, model, observed, &x).ok_or(PoseError::NoValidPose)?;
    let initial_error = (initial_cost / n).sqrt();

    let mut cost = initial_cost;
    let mut accepted_any = false;
    let mut lambda = LAMBDA_INIT;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    'outer: while iterations < config.max_iters {
        iterations += 1;
        if cost == 0.0 {
            termination = Termination::Gradient;
            break;
        }
        let (jtj, grad) = normal_equations(k, model, observed, &x).ok_or(PoseError::NoValidPose)?;
        if grad.amax() < config.gradient_tol {
            termination = Termination::Gradient;
            break;
        }
        loop {
            let mut damped = jtj;
            for d in 0..6 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-grad))) else {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    termination = Termination::Stalled;
                    break 'outer;
                }
                continue;
            };
            if step.norm() < config.step_tol * (x.norm() + config.step_tol) {
                termination = Termination::Step;
                break 'outer;
            }
            let candidate = x + step;
            let new_cost = cost_of(k, model, observed, &candidate).unwrap_or(f64::INFINITY);
            if new_cost < cost {
                x = candidate;
                cost = new_cost;
                accepted_any = true;
                lambda = (lambda / 10.0).max(1e-15);
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }

    if !accepted_any {
        return Ok(LmResult {
            pose: *initial,
            initial_error,
            final_error: initial_error,
            iterations,
            termination,
        });
    }
    Ok(LmResult {
        pose: pose_of(&x),
        initial_error,
        final_error: (cost / n).sqrt(),
        iterations,
        termination,
    })
}
