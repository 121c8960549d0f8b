//! Noise schedule, forward noising, training objective and ancestral sampler
//! for distance-field lattices. The denoiser is a pluggable trait; the module
//! ships an x0-oracle and a zero predictor for exercising the algebra.
//!
//! Lattices are handled in normalized units (distance divided by the bounds
//! diagonal) so unit-variance noise is on the scale of the data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gdf::GdfVolume;

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    pub beta: Vec<f64>,
    /// Cumulative products of `1 - beta`.
    pub alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }
}

/// Linear `beta` from `beta_start` to `beta_end` over `steps` steps.
pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(Error::Config("diffusion needs at least one step".into()));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|t| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * t as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut acc = 1.0;
    let alpha_bar = beta
        .iter()
        .map(|b| {
            acc *= 1.0 - b;
            acc
        })
        .collect();
    Ok(DiffusionSchedule { beta, alpha_bar })
}

/// `x_t = √ᾱ_t · x0 + √(1 - ᾱ_t) · noise`.
pub fn q_sample(x0: &[f64], t: usize, noise: &[f64], schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
    if x0.len() != noise.len() {
        return Err(Error::Shape(format!(
            "noise has {} elements, lattice has {}",
            noise.len(),
            x0.len()
        )));
    }
    let ab = *schedule.alpha_bar.get(t).ok_or_else(|| {
        Error::Config(format!("timestep {t} outside a {}-step schedule", schedule.steps()))
    })?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, e)| a * x + b * e).collect())
}

/// Predicts the noise present in a lattice at timestep `t`.
pub trait Denoiser {
    fn predict(&self, noisy: &[f64], t: usize, condition: &[f64]) -> Vec<f64>;
}

/// Returns the exact noise implied by a known clean lattice.
pub struct OracleDenoiser<'a> {
    pub x0: Vec<f64>,
    pub schedule: &'a DiffusionSchedule,
}

impl Denoiser for OracleDenoiser<'_> {
    fn predict(&self, noisy: &[f64], t: usize, _condition: &[f64]) -> Vec<f64> {
        let ab = self.schedule.alpha_bar[t];
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        noisy.iter().zip(&self.x0).map(|(x, x0)| (x - a * x0) / b).collect()
    }
}

/// Always predicts zero noise.
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, noisy: &[f64], _t: usize, _condition: &[f64]) -> Vec<f64> {
        vec![0.0; noisy.len()]
    }
}

fn checked_predict<D: Denoiser + ?Sized>(
    denoiser: &D,
    x: &[f64],
    t: usize,
    condition: &[f64],
) -> Result<Vec<f64>> {
    let eps = denoiser.predict(x, t, condition);
    if eps.len() != x.len() {
        return Err(Error::Contract(format!(
            "denoiser returned {} values for a {}-element lattice",
            eps.len(),
            x.len()
        )));
    }
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("denoiser returned non-finite values".into()));
    }
    Ok(eps)
}

/// Mean squared error between the predicted and the injected noise.
pub fn mse_noise_loss<D: Denoiser + ?Sized>(
    denoiser: &D,
    x0: &[f64],
    t: usize,
    noise: &[f64],
    condition: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<f64> {
    let xt = q_sample(x0, t, noise, schedule)?;
    let eps = checked_predict(denoiser, &xt, t, condition)?;
    Ok(eps.iter().zip(noise).map(|(p, n)| (p - n) * (p - n)).sum::<f64>() / noise.len() as f64)
}

/// Ancestral reverse sampling from pure noise over `len` elements, `σ_t² = β_t`.
/// The result is clamped to be nonnegative.
pub fn sample_lattice<D: Denoiser + ?Sized>(
    denoiser: &D,
    len: usize,
    condition: &[f64],
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut x: Vec<f64> = (0..len).map(|_| normal.sample(&mut rng)).collect();
    for t in (0..schedule.steps()).rev() {
        let eps = checked_predict(denoiser, &x, t, condition)?;
        let beta = schedule.beta[t];
        let coef = beta / (1.0 - schedule.alpha_bar[t]).sqrt();
        let scale = 1.0 / (1.0 - beta).sqrt();
        let sigma = beta.sqrt();
        for (xi, e) in x.iter_mut().zip(&eps) {
            let mean = scale * (*xi - coef * e);
            *xi = if t > 0 {
                let z: f64 = normal.sample(&mut rng);
                mean + sigma * z
            } else {
                mean
            };
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(x)
}

/// Distance field values scaled into normalized units.
pub fn normalize_gdf(gdf: &GdfVolume) -> Vec<f64> {
    let d = gdf.bounds.diagonal();
    gdf.values.iter().map(|v| v / d).collect()
}

/// Samples a distance field shaped like `template`, un-normalizing the result.
pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    condition: &[f64],
    schedule: &DiffusionSchedule,
    seed: u64,
    template: &GdfVolume,
) -> Result<GdfVolume> {
    let x = sample_lattice(denoiser, template.len(), condition, schedule, seed)?;
    let d = template.bounds.diagonal();
    GdfVolume::new(
        template.resolution,
        template.bounds,
        x.into_iter().map(|v| v * d).collect(),
    )
}
