//! Fixed-count density control: pruned points are parked in a candidate pool
//! and recycled next to points that need densifying.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{logit, sigmoid, CandidatePool, GaussianVolume};
use crate::render::{quat_to_matrix, GradientBuffer};

use super::{initial_attributes, RELEASE_OPACITY};

/// Active points whose activated opacity is below `tau_p`.
pub fn prune_select(volume: &GaussianVolume, tau_p: f64) -> Vec<usize> {
    volume
        .active_indices()
        .filter(|&i| sigmoid(volume.attributes()[i].opacity_logit) < tau_p)
        .collect()
}

/// Active points whose mean accumulated view-space gradient norm exceeds `tau_d`.
pub fn densify_select(volume: &GaussianVolume, stats: &GradientBuffer, tau_d: f64) -> Vec<usize> {
    volume
        .active_indices()
        .filter(|&i| stats.mean_viewspace_norm(i) > tau_d)
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct ExchangeParams {
    /// Largest allowed `|Δμ|` of a recycled point.
    pub epsilon_offsets: f64,
    /// Search radius around a densified center for pooled lattice points.
    pub epsilon_pool: f64,
    /// When false, recycled points keep `Δμ = 0`.
    pub move_offsets: bool,
}

/// What one exchange did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExchangeOutcome {
    pub pruned: Vec<usize>,
    /// `(densified source, recycled grid index)` pairs.
    pub activated: Vec<(usize, usize)>,
    /// Densified points with no pooled candidate in range.
    pub skipped: Vec<usize>,
}

/// Nearest pooled lattice point to `target` within `radius`, ties to the lower index.
fn nearest_pooled(
    volume: &GaussianVolume,
    pool: &CandidatePool,
    target: &Vector3<f64>,
    radius: f64,
) -> Option<usize> {
    let n = volume.resolution() as isize;
    let h = volume.spacing();
    let lo = volume.bounds().min;
    let mut range = [(0isize, 0isize); 3];
    for a in 0..3 {
        let first = ((target[a] - radius - lo[a]) / h[a]).ceil() as isize;
        let last = ((target[a] + radius - lo[a]) / h[a]).floor() as isize;
        range[a] = (first.max(0), last.min(n - 1));
        if range[a].0 > range[a].1 {
            return None;
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for i in range[0].0..=range[0].1 {
        for j in range[1].0..=range[1].1 {
            for k in range[2].0..=range[2].1 {
                let index = volume.index_of([i as usize, j as usize, k as usize]);
                if !pool.contains(index) {
                    continue;
                }
                let d = (volume.grid_position_unchecked(index) - target).norm();
                if d > radius {
                    continue;
                }
                if best.is_none_or(|(bd, bi)| d < bd || (d == bd && index < bi)) {
                    best = Some((d, index));
                }
            }
        }
    }
    best.map(|(_, i)| i)
}

/// Deactivates `pruned` into the pool, then recycles one pooled point next to
/// each entry of `densified`.
///
/// A recycled point is placed at the densified center plus a random draw from
/// that Gaussian's own shape, with its offset clamped to `epsilon_offsets`; it
/// copies scale, rotation and color, and both points end up with half the
/// original opacity.
pub fn pool_exchange<R: Rng>(
    volume: &mut GaussianVolume,
    pool: &mut CandidatePool,
    pruned: &[usize],
    densified: &[usize],
    params: &ExchangeParams,
    rng: &mut R,
) -> Result<ExchangeOutcome> {
    for &i in pruned {
        if i >= volume.len() || !volume.is_active(i) {
            return Err(Error::Contract(format!("pruned point {i} is not active")));
        }
    }
    for &d in densified {
        if pruned.contains(&d) {
            return Err(Error::Contract(format!(
                "point {d} is both pruned and densified"
            )));
        }
        if d >= volume.len() || !volume.is_active(d) {
            return Err(Error::Contract(format!("densified point {d} is not active")));
        }
    }

    let mut outcome = ExchangeOutcome::default();
    for &i in pruned {
        volume.set_active(i, false);
        pool.insert(i);
        outcome.pruned.push(i);
    }

    for &d in densified {
        let center = volume.center(d);
        let Some(target_index) = nearest_pooled(volume, pool, &center, params.epsilon_pool) else {
            outcome.skipped.push(d);
            continue;
        };
        let source = volume.attributes()[d];
        let halved = logit(0.5 * sigmoid(source.opacity_logit));

        let offset = if params.move_offsets {
            let q = crate::model::normalize_quaternion(&source.rotation)?;
            let scale = Vector3::from(source.log_scale).map(f64::exp);
            let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let placed = center + quat_to_matrix(&q) * scale.component_mul(&z);
            let mut off = placed - volume.grid_position_unchecked(target_index);
            let len = off.norm();
            if len > params.epsilon_offsets {
                off *= params.epsilon_offsets / len;
            }
            off
        } else {
            Vector3::zeros()
        };

        {
            let attrs = volume.attributes_mut();
            attrs[d].opacity_logit = halved;
            attrs[target_index] = source;
            attrs[target_index].opacity_logit = halved;
            attrs[target_index].offset = offset.into();
        }
        volume.set_active(target_index, true);
        pool.remove(target_index);
        outcome.activated.push((d, target_index));
    }
    Ok(outcome)
}

/// Reactivates every pooled point at its lattice position with near-zero
/// opacity and the initial shape. Returns the released indices.
pub fn release_pool(volume: &mut GaussianVolume, pool: &mut CandidatePool) -> Vec<usize> {
    let released = pool.drain();
    let init = initial_attributes(volume);
    for &i in &released {
        let a = &mut volume.attributes_mut()[i];
        a.offset = [0.0; 3];
        a.log_scale = init.log_scale;
        a.rotation = init.rotation;
        a.opacity_logit = logit(RELEASE_OPACITY);
        volume.set_active(i, true);
    }
    released
}
