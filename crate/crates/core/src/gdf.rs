//! Gaussian distance field: per lattice point, the Euclidean distance to the
//! nearest qualifying Gaussian center.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{sigmoid, Bounds, GaussianVolume};

/// Default opacity a Gaussian needs to count as geometry.
pub const DEFAULT_OPACITY_FLOOR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct GdfVolume {
    pub resolution: usize,
    pub bounds: Bounds,
    /// Lexicographic grid order, `z` fastest.
    pub values: Vec<f64>,
}

impl GdfVolume {
    pub fn new(resolution: usize, bounds: Bounds, values: Vec<f64>) -> Result<Self> {
        if values.len() != resolution.pow(3) {
            return Err(Error::Shape(format!(
                "resolution {resolution} needs {} values, got {}",
                resolution.pow(3),
                values.len()
            )));
        }
        Ok(GdfVolume {
            resolution,
            bounds,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs_diff(&self, other: &GdfVolume) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Centers of active Gaussians at or above the opacity floor.
fn qualifying_centers(volume: &GaussianVolume, opacity_floor: f64) -> Result<Vec<Vector3<f64>>> {
    let centers: Vec<_> = volume
        .active_indices()
        .filter(|&i| sigmoid(volume.attributes()[i].opacity_logit) >= opacity_floor)
        .map(|i| volume.center(i))
        .collect();
    if centers.is_empty() {
        return Err(Error::EmptyGeometry {
            floor: opacity_floor,
        });
    }
    Ok(centers)
}

#[inline]
fn distance(p: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
    let d = p - q;
    (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
}

/// Exhaustive reference: every lattice point against every qualifying center.
pub fn gdf_oracle(volume: &GaussianVolume, opacity_floor: f64) -> Result<GdfVolume> {
    let centers = qualifying_centers(volume, opacity_floor)?;
    let values = (0..volume.len())
        .map(|i| {
            let p = volume.grid_position_unchecked(i);
            centers
                .iter()
                .map(|c| distance(&p, c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    GdfVolume::new(volume.resolution(), *volume.bounds(), values)
}

/// Centers binned onto the lattice: a center falls in the bin of its nearest
/// lattice point, clamped to the grid.
struct LatticeBins {
    n: usize,
    starts: Vec<usize>,
    points: Vec<Vector3<f64>>,
}

impl LatticeBins {
    fn new(volume: &GaussianVolume, centers: Vec<Vector3<f64>>) -> Self {
        let n = volume.resolution();
        let h = volume.spacing();
        let lo = volume.bounds().min;
        let bin_of = |c: &Vector3<f64>| -> usize {
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let f = ((c[a] - lo[a]) / h[a]).round();
                idx[a] = f.clamp(0.0, (n - 1) as f64) as usize;
            }
            (idx[0] * n + idx[1]) * n + idx[2]
        };
        let bins: Vec<usize> = centers.iter().map(bin_of).collect();
        let mut counts = vec![0usize; n * n * n + 1];
        for &b in &bins {
            counts[b + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut points = vec![Vector3::zeros(); centers.len()];
        for (c, b) in centers.into_iter().zip(bins) {
            points[fill[b]] = c;
            fill[b] += 1;
        }
        LatticeBins {
            n,
            starts: counts,
            points,
        }
    }

    fn bin(&self, i: usize, j: usize, k: usize) -> &[Vector3<f64>] {
        let b = (i * self.n + j) * self.n + k;
        &self.points[self.starts[b]..self.starts[b + 1]]
    }
}

/// Distance field via a lattice-aligned spatial hash with expanding shell
/// search. Any center outside the searched Chebyshev shell of radius `r` bins
/// is at least `(r + ½)·h_min` away, which bounds when the search may stop.
pub fn extract_gdf(volume: &GaussianVolume, opacity_floor: f64) -> Result<GdfVolume> {
    let centers = qualifying_centers(volume, opacity_floor)?;
    let bins = LatticeBins::new(volume, centers);
    let n = volume.resolution() as isize;
    let h_min = volume.spacing().min();

    let query = |index: usize| -> f64 {
        let p = volume.grid_position_unchecked(index);
        let c = volume.coords_of(index).map(|v| v as isize);
        let mut best = f64::INFINITY;
        let mut r: isize = 0;
        loop {
            // visit only the shell at Chebyshev distance r
            for i in (c[0] - r).max(0)..=(c[0] + r).min(n - 1) {
                let di = (i - c[0]).abs();
                for j in (c[1] - r).max(0)..=(c[1] + r).min(n - 1) {
                    let dj = (j - c[1]).abs();
                    let on_shell_ij = di == r || dj == r;
                    let mut k = (c[2] - r).max(0);
                    let k_end = (c[2] + r).min(n - 1);
                    while k <= k_end {
                        let dk = (k - c[2]).abs();
                        if on_shell_ij || dk == r {
                            for q in bins.bin(i as usize, j as usize, k as usize) {
                                let d = distance(&p, q);
                                if d < best {
                                    best = d;
                                }
                            }
                            k += 1;
                        } else {
                            // jump across the shell interior
                            k = c[2] + r;
                        }
                    }
                }
            }
            let covers_grid = c.iter().all(|&ci| ci - r <= 0 && ci + r >= n - 1);
            if best <= (r as f64 + 0.5) * h_min || covers_grid {
                return best;
            }
            r += 1;
        }
    };

    let values: Vec<f64> = (0..volume.len()).into_par_iter().map(query).collect();
    GdfVolume::new(volume.resolution(), *volume.bounds(), values)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{logit, GaussianAttributes};

    fn volume(n: usize, opacity: f64) -> GaussianVolume {
        GaussianVolume::filled(
            n,
            Bounds::unit(),
            GaussianAttributes {
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: logit(opacity),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_offsets_give_zero_field() {
        let v = volume(4, 0.5);
        let f = extract_gdf(&v, 0.05).unwrap();
        assert!(f.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_center_at_centroid() {
        let mut v = volume(3, 0.001);
        let mid = v.index_of([1, 1, 1]);
        v.attributes_mut()[mid].opacity_logit = logit(0.9);
        let f = extract_gdf(&v, 0.05).unwrap();
        assert!((f.values[0] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(f, gdf_oracle(&v, 0.05).unwrap());
    }

    #[test]
    fn two_by_two_by_two_single_center() {
        let mut v = volume(2, 0.001);
        v.attributes_mut()[0].opacity_logit = logit(0.9);
        v.attributes_mut()[0].offset = [0.5, 0.0, 0.0];
        let f = gdf_oracle(&v, 0.05).unwrap();
        // center at (-0.5,-1,-1); corners differ by 0 or 2 per axis
        let expected = |x: f64, y: f64, z: f64| ((x + 0.5).powi(2) + (y + 1.0).powi(2) + (z + 1.0).powi(2)).sqrt();
        for i in 0..8 {
            let p = v.grid_position(i).unwrap();
            assert!((f.values[i] - expected(p.x, p.y, p.z)).abs() < 1e-15);
        }
        assert_eq!(f.values[0], 0.5);
        assert_eq!(f.values[4], 1.5);
    }

    #[test]
    fn no_qualifying_center() {
        let v = volume(3, 0.01);
        assert!(matches!(extract_gdf(&v, 0.05), Err(Error::EmptyGeometry { .. })));
        assert!(matches!(gdf_oracle(&v, 0.05), Err(Error::EmptyGeometry { .. })));
    }

    #[test]
    fn matches_oracle_with_far_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut v = volume(6, 0.5);
        for a in v.attributes_mut() {
            a.offset = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
            a.opacity_logit = if rng.random_bool(0.05) { 1.0 } else { -9.0 };
        }
        v.attributes_mut()[3].opacity_logit = 1.0;
        assert_eq!(extract_gdf(&v, 0.05).unwrap(), gdf_oracle(&v, 0.05).unwrap());
    }
}
