use nalgebra::{Matrix3, Point2, SMatrix, SVector, Vector3};

use super::PoseError;

/// Plane-to-image projective map, scaled so the bottom-right entry is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Maps a plane point; `None` when it lands on the line at infinity.
    pub fn map(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        let h = self.0 * Vector3::new(p.x, p.y, 1.0);
        if h.z.abs() < f64::EPSILON * h.xy().norm() {
            return None;
        }
        Some(Point2::new(h.x / h.z, h.y / h.z))
    }
}

/// Similarity that moves the centroid to the origin and scales the mean
/// distance to sqrt(2).
fn conditioning(points: &[Point2<f64>; 4]) -> Option<Matrix3<f64>> {
    let c = points.iter().fold(Vector3::zeros(), |acc, p| {
        acc + Vector3::new(p.x, p.y, 0.0)
    }) / 4.0;
    let mean_dist = points
        .iter()
        .map(|p| ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt())
        .sum::<f64>()
        / 4.0;
    if !(mean_dist.is_finite() && mean_dist > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

fn apply(m: &Matrix3<f64>, p: &Point2<f64>) -> Point2<f64> {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

/// True when some three of the (already conditioned) points are collinear.
fn has_collinear_triple(points: &[Point2<f64>; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|t| {
        let a = points[t[1]] - points[t[0]];
        let b = points[t[2]] - points[t[0]];
        (a.x * b.y - a.y * b.x).abs() < 1e-9
    })
}

/// Exact homography from four correspondences (8 equations, 8 unknowns).
pub fn homography_from_4_points(
    model_uv: &[Point2<f64>; 4],
    pixels: &[Point2<f64>; 4],
) -> Result<Homography, PoseError> {
    let tm = conditioning(model_uv).ok_or(PoseError::DegenerateConfiguration)?;
    let tp = conditioning(pixels).ok_or(PoseError::DegenerateConfiguration)?;
    let m: [Point2<f64>; 4] = std::array::from_fn(|i| apply(&tm, &model_uv[i]));
    let p: [Point2<f64>; 4] = std::array::from_fn(|i| apply(&tp, &pixels[i]));
    if has_collinear_triple(&m) || has_collinear_triple(&p) {
        return Err(PoseError::DegenerateConfiguration);
    }

    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (u, w) = (m[i].x, m[i].y);
        let (x, y) = (p[i].x, p[i].y);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[u, w, 1.0, 0.0, 0.0, 0.0, -x * u, -x * w]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, u, w, 1.0, -y * u, -y * w]);
        b[r] = x;
        b[r + 1] = y;
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or(PoseError::DegenerateConfiguration)?;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(PoseError::DegenerateConfiguration);
    }
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let tp_inv = tp
        .try_inverse()
        .ok_or(PoseError::DegenerateConfiguration)?;
    let mut full = tp_inv * hn * tm;
    let scale = full[(2, 2)];
    if scale.abs() > f64::EPSILON * full.norm() {
        full /= scale;
    }
    if !(full.determinant().abs() > 1e-12) {
        return Err(PoseError::DegenerateConfiguration);
    }
    Ok(Homography(full))
}
