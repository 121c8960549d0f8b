//! Synthetic ground-truth scenes and posed renders of them.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PosedView};
use crate::error::{Error, Result};
use crate::model::{logit, Bounds, Camera, GaussianAttributes, GaussianVolume};
use crate::render::render;

/// Logit given to lattice points that carry no scene Gaussian.
const UNUSED_OPACITY_LOGIT: f64 = -40.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Placement {
    /// Uniform in a ball centered at the origin.
    RandomInSphere { radius: f64 },
    /// Uniform directions, radius uniform in `[inner, outer]`.
    Shell { inner: f64, outer: f64 },
    /// Distinct lattice points of the scene volume, zero offsets.
    LatticeSubset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ColorScheme {
    /// Independent uniform channels in `[lo, hi]`.
    Random { lo: f64, hi: f64 },
    /// Color varies smoothly with position, from `low` at `y = -1` to `high` at `y = 1`.
    Gradient { low: [f64; 3], high: [f64; 3] },
    Constant { color: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub gaussian_count: usize,
    pub placement: Placement,
    pub colors: ColorScheme,
    /// Activated opacity range.
    pub opacity_range: [f64; 2],
    /// Per-axis standard deviation range, world units (sampled log-uniformly).
    pub scale_range: [f64; 2],
    /// Lattice resolution of the returned volume; `None` picks the smallest
    /// `N` with `N³ >= gaussian_count`.
    pub resolution: Option<usize>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            gaussian_count: 200,
            // a hollow object-like surface of small splats
            placement: Placement::Shell { inner: 0.3, outer: 0.6 },
            colors: ColorScheme::Random { lo: 0.05, hi: 0.95 },
            opacity_range: [0.6, 0.95],
            scale_range: [0.02, 0.06],
            resolution: None,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gaussian_count == 0 {
            return Err(Error::Config("a scene needs at least one gaussian".into()));
        }
        let [olo, ohi] = self.opacity_range;
        if !(0.0 < olo && olo <= ohi && ohi < 1.0) {
            return Err(Error::Config(format!("opacity range {olo}..{ohi} must lie in (0, 1)")));
        }
        let [slo, shi] = self.scale_range;
        if !(0.0 < slo && slo <= shi && shi.is_finite()) {
            return Err(Error::Config(format!("scale range {slo}..{shi} must be positive")));
        }
        match self.placement {
            Placement::RandomInSphere { radius } if !(radius > 0.0 && radius <= 1.0) => {
                return Err(Error::Config(format!("sphere radius {radius} must be in (0, 1]")));
            }
            Placement::Shell { inner, outer } if !(0.0 <= inner && inner <= outer && outer <= 1.0) => {
                return Err(Error::Config(format!("shell radii {inner}..{outer} must satisfy 0 <= inner <= outer <= 1")));
            }
            _ => {}
        }
        if let Some(n) = self.resolution {
            if n < 2 || n.pow(3) < self.gaussian_count {
                return Err(Error::Config(format!(
                    "resolution {n} cannot hold {} gaussians",
                    self.gaussian_count
                )));
            }
        }
        Ok(())
    }

    fn lattice_resolution(&self) -> usize {
        self.resolution.unwrap_or_else(|| {
            let mut n = 2;
            while n * n * n < self.gaussian_count {
                n += 1;
            }
            n
        })
    }
}

fn uniform_between<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Deterministic scene from `spec.seed`. Every lattice point is active; points
/// that carry no scene Gaussian are made invisible.
pub fn make_scene(spec: &SceneSpec) -> Result<GaussianVolume> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.lattice_resolution();
    let mut volume = GaussianVolume::filled(
        n,
        Bounds::unit(),
        GaussianAttributes {
            log_scale: [spec.scale_range[0].ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: UNUSED_OPACITY_LOGIT,
            color: [0.0; 3],
            offset: [0.0; 3],
        },
    )?;

    let slots: Vec<usize> = match spec.placement {
        Placement::LatticeSubset => {
            rand::seq::index::sample(&mut rng, volume.len(), spec.gaussian_count).into_vec()
        }
        _ => (0..spec.gaussian_count).collect(),
    };

    for &slot in &slots {
        let center: Vector3<f64> = match spec.placement {
            Placement::RandomInSphere { radius } => {
                let dir: [f64; 3] = UnitSphere.sample(&mut rng);
                let r = radius * rng.random::<f64>().cbrt();
                Vector3::from(dir) * r
            }
            Placement::Shell { inner, outer } => {
                let dir: [f64; 3] = UnitSphere.sample(&mut rng);
                Vector3::from(dir) * uniform_between(&mut rng, inner, outer)
            }
            Placement::LatticeSubset => volume.grid_position_unchecked(slot),
        };
        let grid = volume.grid_position_unchecked(slot);
        let (llo, lhi) = (spec.scale_range[0].ln(), spec.scale_range[1].ln());
        let log_scale = std::array::from_fn(|_| uniform_between(&mut rng, llo, lhi));
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rotation = if qn > 1e-9 {
            q.map(|v| v / qn)
        } else {
            [1.0, 0.0, 0.0, 0.0]
        };
        let opacity = uniform_between(&mut rng, spec.opacity_range[0], spec.opacity_range[1]);
        let color = match &spec.colors {
            ColorScheme::Random { lo, hi } => std::array::from_fn(|_| uniform_between(&mut rng, *lo, *hi)),
            ColorScheme::Gradient { low, high } => {
                let t = (0.5 * (center.y + 1.0)).clamp(0.0, 1.0);
                std::array::from_fn(|c| low[c] + t * (high[c] - low[c]))
            }
            ColorScheme::Constant { color } => *color,
        };
        volume.attributes_mut()[slot] = GaussianAttributes {
            offset: (center - grid).into(),
            log_scale,
            rotation,
            opacity_logit: logit(opacity),
            color,
        };
    }
    Ok(volume)
}

/// `count` unit directions spread over the sphere on a Fibonacci spiral.
pub fn fibonacci_sphere(count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Cameras on a sphere of `radius` looking at the origin.
pub fn orbit_cameras(count: usize, radius: f64, resolution: usize, fov_x: f64) -> Result<Vec<Camera>> {
    fibonacci_sphere(count)
        .into_iter()
        .map(|dir| {
            Camera::look_at(
                dir * radius,
                Vector3::zeros(),
                Vector3::y(),
                resolution,
                resolution,
                fov_x,
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub count: usize,
    pub radius: f64,
    /// Square image edge in pixels.
    pub resolution: usize,
    /// Horizontal field of view, degrees.
    #[serde(default = "default_fov_deg")]
    pub fov_deg: f64,
    #[serde(default = "default_background")]
    pub background: [f64; 3],
}

fn default_fov_deg() -> f64 {
    50.0
}

fn default_background() -> [f64; 3] {
    [1.0; 3]
}

impl ViewSpec {
    pub fn new(count: usize, radius: f64, resolution: usize) -> Self {
        ViewSpec {
            count,
            radius,
            resolution,
            fov_deg: default_fov_deg(),
            background: default_background(),
        }
    }
}

/// Renders `scene` from `spec.count` orbit cameras.
pub fn render_dataset(scene: &GaussianVolume, spec: &ViewSpec) -> Result<Dataset> {
    if spec.count == 0 {
        return Err(Error::Config("view count must be at least 1".into()));
    }
    if !(spec.radius > 0.0) || spec.resolution == 0 {
        return Err(Error::Config("views need a positive radius and resolution".into()));
    }
    let cameras = orbit_cameras(spec.count, spec.radius, spec.resolution, spec.fov_deg.to_radians())?;
    let views = cameras
        .into_par_iter()
        .enumerate()
        .map(|(i, camera)| {
            let image = render(scene, &camera, spec.background)?;
            Ok(PosedView {
                name: format!("r_{i}"),
                camera,
                image,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        views,
        background: spec.background,
        bounds: *scene.bounds(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sigmoid;

    #[test]
    fn single_lattice_gaussian() {
        let spec = SceneSpec {
            gaussian_count: 1,
            placement: Placement::LatticeSubset,
            ..Default::default()
        };
        let v = make_scene(&spec).unwrap();
        let visible: Vec<_> = (0..v.len())
            .filter(|&i| sigmoid(v.attributes()[i].opacity_logit) > 0.5)
            .collect();
        assert_eq!(visible.len(), 1);
        assert_eq!(v.center(visible[0]), v.grid_position(visible[0]).unwrap());
        assert_eq!(v.active_count(), v.len());
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::default();
        assert_eq!(make_scene(&spec).unwrap(), make_scene(&spec).unwrap());
        let other = SceneSpec { seed: 1, ..spec };
        assert_ne!(make_scene(&other).unwrap(), make_scene(&SceneSpec::default()).unwrap());
    }

    #[test]
    fn shell_radii_hold() {
        let spec = SceneSpec {
            gaussian_count: 300,
            placement: Placement::Shell { inner: 0.4, outer: 0.55 },
            ..Default::default()
        };
        let v = make_scene(&spec).unwrap();
        for i in 0..300 {
            let r = v.center(i).norm();
            assert!((0.4 - 1e-12..=0.55 + 1e-12).contains(&r), "{r}");
        }
    }

    #[test]
    fn centers_inside_bounds() {
        let v = make_scene(&SceneSpec::default()).unwrap();
        for i in 0..v.len() {
            assert!(v.center(i).iter().all(|c| c.abs() <= 1.0));
        }
    }

    #[test]
    fn orbit_cameras_look_at_origin() {
        for cam in orbit_cameras(24, 1.6, 32, 0.9).unwrap() {
            let c = cam.to_camera(&Vector3::zeros());
            assert!(c.x.abs() < 1e-6 && c.y.abs() < 1e-6);
            assert!((c.z - 1.6).abs() < 1e-9);
            assert!((cam.position().norm() - 1.6).abs() < 1e-9);
        }
    }

    #[test]
    fn protocol_shapes() {
        let scene = make_scene(&SceneSpec {
            gaussian_count: 8,
            ..Default::default()
        })
        .unwrap();
        let train = render_dataset(&scene, &ViewSpec::new(72, 2.4, 8)).unwrap();
        assert_eq!(train.len(), 72);
        let eval = render_dataset(&scene, &ViewSpec::new(24, 1.6, 8)).unwrap();
        assert_eq!(eval.len(), 24);
        assert_eq!(train, render_dataset(&scene, &ViewSpec::new(72, 2.4, 8)).unwrap());
        assert!(render_dataset(&scene, &ViewSpec::new(0, 2.4, 8)).is_err());
    }
}
