#![allow(dead_code, clippy::needless_range_loop)]

pub mod fixtures;
pub mod ply;
pub mod pool;

use gaussvol::diffusion::{build_schedule, q_sample};
use gaussvol::render::render;
use gaussvol::model::{logit, Bounds, Camera, GaussianAttributes, GaussianVolume, ImageBuffer, CHANNELS};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-3;
pub const FD_ABS_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Camera on a sphere of `radius` around the origin, looking at it.
pub fn random_camera(rng: &mut ChaCha8Rng, radius: f64, width: usize, height: usize) -> Camera {
    loop {
        let d: [f64; 3] = UnitSphere.sample(rng);
        let eye = Vector3::from(d) * radius;
        // keep away from the look_at singularity
        if d[1].abs() > 0.95 {
            continue;
        }
        return Camera::look_at(eye, Vector3::zeros(), Vector3::y(), width, height, 60f64.to_radians()).unwrap();
    }
}

/// Unnormalized, with norm in `[1, 2)`: smaller norms magnify the third
/// derivative the fixed finite-difference step sees.
pub fn random_quaternion(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = rng.random_range(1.0..2.0);
    q.map(|v| v * target / n)
}

/// A 2³ volume with `count` active Gaussians and random attributes chosen to
/// stay away from the alpha clamp and early termination.
pub fn random_small_volume(rng: &mut ChaCha8Rng, count: usize) -> GaussianVolume {
    let mut volume = GaussianVolume::filled(2, Bounds::unit(), GaussianAttributes::default()).unwrap();
    let mut slots: Vec<usize> = (0..8).collect();
    for i in (1..8).rev() {
        slots.swap(i, rng.random_range(0..=i));
    }
    for i in 0..8 {
        volume.set_active(i, false);
    }
    for &i in &slots[..count] {
        let a = GaussianAttributes {
            offset: std::array::from_fn(|_| rng.random_range(-0.3..0.3)),
            log_scale: std::array::from_fn(|_| rng.random_range(0.25f64..0.6).ln()),
            rotation: random_quaternion(rng),
            opacity_logit: logit(rng.random_range(0.3..0.8)),
            color: std::array::from_fn(|_| rng.random_range(0.1..0.9)),
        };
        volume.attributes_mut()[i] = a;
        volume.set_active(i, true);
    }
    volume
}

/// Camera-space depths of all active centers differ pairwise by at least `gap`.
pub fn depths_separated(volume: &GaussianVolume, cam: &Camera, gap: f64) -> bool {
    let depths: Vec<f64> = volume
        .active_indices()
        .map(|i| cam.to_camera(&volume.center(i)).z)
        .collect();
    depths
        .iter()
        .enumerate()
        .all(|(i, a)| depths[i + 1..].iter().all(|b| (a - b).abs() >= gap))
}

/// A render-gradient configuration with `count` Gaussians, a 32×32 camera and
/// signed upstream weights, redrawn until center depths are separated and
/// finite differences of the weighted render are well conditioned. Also
/// returns how many draws were rejected.
pub fn fd_render_config(seed: u64, count: usize, background: [f64; 3]) -> (GaussianVolume, Camera, Vec<f64>, usize) {
    let mut r = rng(seed);
    let mut rejected = 0;
    loop {
        let volume = random_small_volume(&mut r, count);
        let cam = random_camera(&mut r, 4.0, 32, 32);
        let w: Vec<f64> = (0..32 * 32 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
        if depths_separated(&volume, &cam, 0.02)
            && fd_well_conditioned(&volume, |v| weighted_sum(&render(v, &cam, background).unwrap(), &w))
        {
            return (volume, cam, w, rejected);
        }
        rejected += 1;
    }
}

pub fn random_image(rng: &mut ChaCha8Rng, width: usize, height: usize) -> ImageBuffer {
    let rgb = (0..width * height * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    ImageBuffer::from_rgb(width, height, rgb).unwrap()
}

/// Image that differs from `base` by at least `margin` in every value, so
/// L1 kinks stay outside finite-difference stencils.
pub fn offset_target(rng: &mut ChaCha8Rng, base: &ImageBuffer, margin: f64) -> ImageBuffer {
    let rgb = base
        .rgb
        .iter()
        .map(|v| {
            let d = margin + rng.random_range(0.0..0.1);
            if rng.random_bool(0.5) {
                v + d
            } else {
                v - d
            }
        })
        .collect();
    ImageBuffer::from_rgb(base.width, base.height, rgb).unwrap()
}

pub fn fd_agrees(analytic: f64, numeric: f64) -> bool {
    let err = (analytic - numeric).abs();
    err <= FD_ABS_FLOOR || err <= FD_REL_TOL * analytic.abs().max(numeric.abs())
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

impl FdReport {
    pub fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = (analytic - numeric).abs();
        if err > FD_ABS_FLOOR {
            let rel = err / analytic.abs().max(numeric.abs());
            self.worst_rel = self.worst_rel.max(rel);
        }
        if !fd_agrees(analytic, numeric) {
            self.failures.push(format!("{}: analytic {analytic:e}, numeric {numeric:e}", label()));
        }
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.failures.extend(other.failures);
        self.worst_rel = self.worst_rel.max(other.worst_rel);
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Central differences of `f` over every stored channel of every grid point
/// against `analytic`. Inactive points must have an exactly zero analytic
/// gradient.
pub fn check_volume_partials(
    volume: &GaussianVolume,
    analytic: &[GaussianAttributes],
    f: impl Fn(&GaussianVolume) -> f64,
) -> FdReport {
    let mut report = FdReport::default();
    for index in 0..volume.len() {
        let a = analytic[index].to_channels();
        if !volume.is_active(index) {
            report.record(|| format!("inactive {index}"), a.iter().map(|v| v.abs()).sum(), 0.0);
            continue;
        }
        let base = volume.attributes()[index].to_channels();
        for c in 0..CHANNELS {
            let eval = |delta: f64| {
                let mut v = volume.clone();
                let mut ch = base;
                ch[c] += delta;
                v.attributes_mut()[index] = GaussianAttributes::from_channels(&ch);
                f(&v)
            };
            let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            report.record(|| format!("gaussian {index} channel {c}"), a[c], numeric);
        }
    }
    report
}

/// Whether step-`FD_STEP` central differences of `f` are trustworthy at
/// `volume`: the Richardson estimate of their truncation error, from a second
/// difference at half the step, stays under half the tolerance for every
/// active channel. Looks only at `f`, never at an analytic gradient.
pub fn fd_well_conditioned(volume: &GaussianVolume, f: impl Fn(&GaussianVolume) -> f64) -> bool {
    volume.active_indices().all(|index| {
        let base = volume.attributes()[index].to_channels();
        (0..CHANNELS).all(|c| {
            let diff = |h: f64| {
                let eval = |delta: f64| {
                    let mut v = volume.clone();
                    let mut ch = base;
                    ch[c] += delta;
                    v.attributes_mut()[index] = GaussianAttributes::from_channels(&ch);
                    f(&v)
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            };
            let (coarse, fine) = (diff(FD_STEP), diff(0.5 * FD_STEP));
            let truncation = (coarse - fine).abs() * 4.0 / 3.0;
            truncation <= 0.5 * FD_ABS_FLOOR.max(FD_REL_TOL * coarse.abs().max(fine.abs()))
        })
    })
}

/// Central differences of `f` over every value of an image.
pub fn check_image_partials(image: &ImageBuffer, analytic: &[f64], f: impl Fn(&ImageBuffer) -> f64) -> FdReport {
    let mut report = FdReport::default();
    for k in 0..image.rgb.len() {
        let eval = |delta: f64| {
            let mut im = image.clone();
            im.rgb[k] += delta;
            f(&im)
        };
        let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
        report.record(|| format!("pixel value {k}"), analytic[k], numeric);
    }
    report
}

/// `Σ w·image` for a fixed weight image: its image gradient is `w`.
pub fn weighted_sum(image: &ImageBuffer, weights: &[f64]) -> f64 {
    image.rgb.iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Sample mean and variance of `x_t` for a scalar `x0` over `draws` noise draws.
pub fn forward_moments(x0: f64, t: usize, draws: usize, seed: u64) -> (f64, f64) {
    let s = build_schedule(1000, 1e-4, 2e-2).unwrap();
    let mut r = rng(seed);
    let noise: Vec<f64> = (0..draws).map(|_| StandardNormal.sample(&mut r)).collect();
    let xs = q_sample(&vec![x0; draws], t, &noise, &s).unwrap();
    let mean = xs.iter().sum::<f64>() / draws as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    (mean, var)
}
