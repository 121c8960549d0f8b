//! Scenes and volumes shared by several test targets.

use gaussvol::gdf::GdfVolume;
use gaussvol::model::{logit, Bounds, Camera, GaussianAttributes, GaussianVolume};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use super::{random_quaternion, rng};

/// 33×33 camera at `(0, 0, -3)` looking down `+z`, principal point at pixel 16.
pub fn axis_camera() -> Camera {
    Camera::new(33, 33, 40.0, 40.0, 16.0, 16.0, Matrix3::identity(), Vector3::new(0.0, 0.0, 3.0)).unwrap()
}

pub fn empty(n: usize) -> GaussianVolume {
    let mut v = GaussianVolume::filled(
        n,
        Bounds::unit(),
        GaussianAttributes {
            rotation: [1.0, 0.0, 0.0, 0.0],
            ..Default::default()
        },
    )
    .unwrap();
    for i in 0..v.len() {
        v.set_active(i, false);
    }
    v
}

/// Activates grid point `index` as an isotropic Gaussian centered at `center`.
pub fn place(v: &mut GaussianVolume, index: usize, center: [f64; 3], sigma: f64, opacity: f64, color: [f64; 3]) {
    let p = v.grid_position(index).unwrap();
    v.attributes_mut()[index] = GaussianAttributes {
        offset: [center[0] - p.x, center[1] - p.y, center[2] - p.z],
        log_scale: [sigma.ln(); 3],
        rotation: [1.0, 0.0, 0.0, 0.0],
        opacity_logit: logit(opacity),
        color,
    };
    v.set_active(index, true);
}

/// Alpha of an isotropic Gaussian on the optical axis at depth `z`, seen at a
/// pixel `(dx, dy)` from its projected center.
pub fn axial_alpha(sigma: f64, z: f64, opacity: f64, dx: f64, dy: f64) -> f64 {
    let f = 40.0;
    let var = (f * sigma / z).powi(2) + 0.3;
    (opacity * (-0.5 * (dx * dx + dy * dy) / var).exp()).min(0.99)
}

pub fn random_dense_volume(seed: u64, n: usize) -> GaussianVolume {
    let mut r = rng(seed);
    let mut v = GaussianVolume::filled(n, Bounds::unit(), GaussianAttributes::default()).unwrap();
    for i in 0..v.len() {
        v.attributes_mut()[i] = GaussianAttributes {
            offset: std::array::from_fn(|_| r.random_range(-0.2..0.2)),
            log_scale: std::array::from_fn(|_| r.random_range(0.03f64..0.3).ln()),
            rotation: random_quaternion(&mut r),
            opacity_logit: r.random_range(-4.0..4.0),
            color: std::array::from_fn(|_| r.random_range(0.0..1.0)),
        };
        v.set_active(i, r.random_bool(0.8));
    }
    v
}

/// Random volume whose values are all exactly representable as `f32`.
pub fn random_f32_volume(seed: u64, n: usize) -> GaussianVolume {
    let mut r = rng(seed);
    let bounds = Bounds::new([-1.5, -0.5, -2.0], [1.0, 2.25, 0.5]).unwrap();
    let mut v = GaussianVolume::filled(n, bounds, GaussianAttributes::default()).unwrap();
    for i in 0..v.len() {
        let mut ch = [0.0; 14];
        for c in ch.iter_mut() {
            *c = r.random_range(-3.0f32..3.0) as f64;
        }
        v.attributes_mut()[i] = GaussianAttributes::from_channels(&ch);
        v.set_active(i, r.random_bool(0.6));
    }
    v
}

/// Random volume with a mix of small and far-reaching offsets and a sparse,
/// random set of opaque points.
pub fn random_geometry(seed: u64, n: usize) -> GaussianVolume {
    let mut r = rng(seed);
    let bounds = if seed.is_multiple_of(3) {
        Bounds::new([-2.0, -1.0, 0.0], [2.0, 0.5, 3.0]).unwrap()
    } else {
        Bounds::unit()
    };
    let mut v = GaussianVolume::filled(n, bounds, GaussianAttributes::default()).unwrap();
    let density = r.random_range(0.005..0.3);
    let reach = r.random_range(0.0..2.0) * v.spacing().max();
    for i in 0..v.len() {
        let a = &mut v.attributes_mut()[i];
        a.offset = std::array::from_fn(|_| r.random_range(-reach..=reach));
        a.opacity_logit = if r.random_bool(density) {
            logit(r.random_range(0.05..1.0))
        } else {
            logit(r.random_range(0.001..0.0499))
        };
        if r.random_bool(0.1) {
            v.set_active(i, false);
        }
    }
    // guarantee at least one qualifying point
    let first = v.active_indices().next().unwrap();
    v.attributes_mut()[first].opacity_logit = 2.0;
    v
}

/// `|F(p) - F(q)| <= |p - q|` for every pair of lattice points one step apart
/// along any combination of axes.
pub fn lipschitz_violations(f: &GdfVolume, v: &GaussianVolume) -> usize {
    let n = f.resolution;
    let mut bad = 0;
    for i in 0..f.len() {
        let c = v.coords_of(i);
        for d in 1..27usize {
            let step = [d / 9, (d / 3) % 3, d % 3].map(|s| s as isize - 1);
            let nb: Option<Vec<usize>> = (0..3)
                .map(|a| {
                    let x = c[a] as isize + step[a];
                    (0..n as isize).contains(&x).then_some(x as usize)
                })
                .collect();
            let Some(nb) = nb else { continue };
            let j = v.index_of([nb[0], nb[1], nb[2]]);
            let dist = (v.grid_position(i).unwrap() - v.grid_position(j).unwrap()).norm();
            if (f.values[i] - f.values[j]).abs() > dist + 1e-12 {
                bad += 1;
            }
        }
    }
    bad
}
