//! EWA projection of a 3D Gaussian onto the image plane and its adjoint.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::model::Camera;

use super::{FOOTPRINT_RADIUS_SQ, LOW_PASS, NEAR_PLANE};

/// A Gaussian after projection, before color and opacity are attached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub mean2d: Vector2<f64>,
    /// Screen-space covariance including the low-pass term.
    pub cov2d: Matrix2<f64>,
    /// Camera-space `z`.
    pub depth: f64,
    /// Half-widths of the axis-aligned box around the footprint ellipse.
    pub half_extent: Vector2<f64>,
}

impl Projection {
    /// Entries `(a, b, c)` of the inverse covariance `[[a, b], [b, c]]`.
    pub fn conic(&self) -> [f64; 3] {
        let (a, b, c) = (self.cov2d[(0, 0)], self.cov2d[(0, 1)], self.cov2d[(1, 1)]);
        let det = a * c - b * b;
        [c / det, -b / det, a / det]
    }
}

fn jacobian(t: &Vector3<f64>, cam: &Camera) -> Matrix2x3<f64> {
    let zi = 1.0 / t.z;
    Matrix2x3::new(
        cam.fx * zi,
        0.0,
        -cam.fx * t.x * zi * zi,
        0.0,
        cam.fy * zi,
        -cam.fy * t.y * zi * zi,
    )
}

/// Projects center `mu` with covariance `sigma`. Returns `None` when the
/// Gaussian is behind the near plane or its footprint misses the image.
pub fn project(mu: &Vector3<f64>, sigma: &Matrix3<f64>, cam: &Camera) -> Option<Projection> {
    let t = cam.to_camera(mu);
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let mean2d = Vector2::new(
        cam.fx * t.x / t.z + cam.cx,
        cam.fy * t.y / t.z + cam.cy,
    );
    let tw = jacobian(&t, cam) * cam.rotation;
    let mut cov2d = tw * sigma * tw.transpose();
    cov2d = 0.5 * (cov2d + cov2d.transpose());
    cov2d[(0, 0)] += LOW_PASS;
    cov2d[(1, 1)] += LOW_PASS;
    let det = cov2d.determinant();
    if !(det > 0.0) || !mean2d.iter().all(|v| v.is_finite()) {
        return None;
    }
    // padded so rounding in the conic never puts an accepted pixel outside
    let half_extent = Vector2::new(
        (FOOTPRINT_RADIUS_SQ * cov2d[(0, 0)]).sqrt() * (1.0 + 1e-9) + 1e-9,
        (FOOTPRINT_RADIUS_SQ * cov2d[(1, 1)]).sqrt() * (1.0 + 1e-9) + 1e-9,
    );
    let misses = mean2d.x + half_extent.x < 0.0
        || mean2d.x - half_extent.x > (cam.width - 1) as f64
        || mean2d.y + half_extent.y < 0.0
        || mean2d.y - half_extent.y > (cam.height - 1) as f64;
    if misses {
        return None;
    }
    Some(Projection {
        mean2d,
        cov2d,
        depth: t.z,
        half_extent,
    })
}

/// Gradients flowing out of the projection, w.r.t. the world center and `Σ`.
pub struct ProjectionGrad {
    pub mu: Vector3<f64>,
    pub sigma: Matrix3<f64>,
}

/// Adjoint of [`project`]. `grad_conic` is `∂L/∂(a, b, c)` with the off-diagonal
/// `b` counted once (the pixel quadratic form uses `2b`).
pub fn project_backward(
    mu: &Vector3<f64>,
    sigma: &Matrix3<f64>,
    cam: &Camera,
    proj: &Projection,
    grad_mean2d: &Vector2<f64>,
    grad_conic: &[f64; 3],
) -> ProjectionGrad {
    let t = cam.to_camera(mu);
    let (a, b, c) = (proj.cov2d[(0, 0)], proj.cov2d[(0, 1)], proj.cov2d[(1, 1)]);
    let det = a * c - b * b;
    let d2 = det * det;
    let [ga, gb, gc] = *grad_conic;
    let g_a = (-c * c * ga + b * c * gb - b * b * gc) / d2;
    let g_b = (2.0 * b * c * ga - (a * c + b * b) * gb + 2.0 * a * b * gc) / d2;
    let g_c = (-b * b * ga + a * b * gb - a * a * gc) / d2;
    let g2 = Matrix2::new(g_a, 0.5 * g_b, 0.5 * g_b, g_c);

    let jac = jacobian(&t, cam);
    let tw = jac * cam.rotation;
    let grad_sigma = tw.transpose() * g2 * tw;
    let grad_tw = 2.0 * g2 * tw * sigma;
    let grad_j = grad_tw * cam.rotation.transpose();

    let zi = 1.0 / t.z;
    let zi2 = zi * zi;
    let zi3 = zi2 * zi;
    let (fx, fy) = (cam.fx, cam.fy);
    let gx = grad_mean2d.x * fx * zi - grad_j[(0, 2)] * fx * zi2;
    let gy = grad_mean2d.y * fy * zi - grad_j[(1, 2)] * fy * zi2;
    let gz = -grad_mean2d.x * fx * t.x * zi2 - grad_mean2d.y * fy * t.y * zi2
        - grad_j[(0, 0)] * fx * zi2
        + grad_j[(0, 2)] * 2.0 * fx * t.x * zi3
        - grad_j[(1, 1)] * fy * zi2
        + grad_j[(1, 2)] * 2.0 * fy * t.y * zi3;
    let grad_t = Vector3::new(gx, gy, gz);
    ProjectionGrad {
        mu: cam.rotation.transpose() * grad_t,
        sigma: grad_sigma,
    }
}
