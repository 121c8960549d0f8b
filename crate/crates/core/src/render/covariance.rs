use nalgebra::{Matrix3, Vector3};

use crate::error::Result;
use crate::model::normalize_quaternion;

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn covariance3d(log_scale: &[f64; 3], rotation: &[f64; 4]) -> Result<Matrix3<f64>> {
    let q = normalize_quaternion(rotation)?;
    let m = quat_to_matrix(&q) * Matrix3::from_diagonal(&Vector3::from(*log_scale).map(f64::exp));
    Ok(m * m.transpose())
}

/// Pulls a gradient on `Σ` back onto the stored log-scale and raw quaternion.
///
/// `grad_sigma` must be the symmetric gradient `∂L/∂Σ`.
pub fn covariance3d_backward(
    log_scale: &[f64; 3],
    rotation: &[f64; 4],
    grad_sigma: &Matrix3<f64>,
) -> Result<([f64; 3], [f64; 4])> {
    let qn = normalize_quaternion(rotation)?;
    let norm = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = quat_to_matrix(&qn);
    let s = Vector3::from(*log_scale).map(f64::exp);
    let m = r * Matrix3::from_diagonal(&s);
    let grad_m = 2.0 * grad_sigma * m;

    let mut d_log_scale = [0.0; 3];
    let mut grad_r = Matrix3::zeros();
    for k in 0..3 {
        let ds = (0..3).map(|i| grad_m[(i, k)] * r[(i, k)]).sum::<f64>();
        d_log_scale[k] = ds * s[k];
        for i in 0..3 {
            grad_r[(i, k)] = grad_m[(i, k)] * s[k];
        }
    }

    let [w, x, y, z] = qn;
    let g = |i: usize, j: usize| grad_r[(i, j)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let gq = [dw, dx, dy, dz];

    // through q / |q|
    let dot: f64 = (0..4).map(|i| gq[i] * qn[i]).sum();
    let d_rotation = std::array::from_fn(|i| (gq[i] - qn[i] * dot) / norm);
    Ok((d_log_scale, d_rotation))
}
