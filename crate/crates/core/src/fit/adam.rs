use crate::error::{Error, Result};
use crate::model::{ChannelGroup, GaussianAttributes, GaussianVolume, CHANNELS};
use crate::render::GradientBuffer;

use super::FitConfig;

/// Adam moments for every stored channel of every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Vec<[f64; CHANNELS]>,
    pub second: Vec<[f64; CHANNELS]>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first: vec![[0.0; CHANNELS]; len],
            second: vec![[0.0; CHANNELS]; len],
            step: 0,
        }
    }

    /// Clears the moments of one point, e.g. when it is reactivated.
    pub fn reset(&mut self, index: usize) {
        self.first[index] = [0.0; CHANNELS];
        self.second[index] = [0.0; CHANNELS];
    }
}

/// One bias-corrected Adam update of every active point, each channel group
/// with its own learning rate. Inactive points are left untouched.
pub fn adam_step(
    volume: &mut GaussianVolume,
    grads: &GradientBuffer,
    state: &mut AdamState,
    cfg: &FitConfig,
) -> Result<()> {
    if grads.len() != volume.len() || state.first.len() != volume.len() {
        return Err(Error::Shape(format!(
            "optimizer sized for {} points, gradients {}, volume {}",
            state.first.len(),
            grads.len(),
            volume.len()
        )));
    }
    for (index, g) in grads.grads.iter().enumerate() {
        if !volume.is_active(index) && !g.is_zero() {
            return Err(Error::Contract(format!(
                "nonzero gradient on deactivated point {index}"
            )));
        }
        if let Some(channel) = g.first_non_finite() {
            return Err(Error::Optimizer { channel, index });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.adam_beta1.powi(t);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t);
    let lrs: [f64; CHANNELS] = std::array::from_fn(|c| cfg.learning_rate(ChannelGroup::of_channel(c)));

    for index in 0..volume.len() {
        if !volume.is_active(index) {
            continue;
        }
        let g = grads.grads[index].to_channels();
        let mut p = volume.attributes()[index].to_channels();
        let m = &mut state.first[index];
        let v = &mut state.second[index];
        for c in 0..CHANNELS {
            if lrs[c] == 0.0 {
                continue;
            }
            m[c] = cfg.adam_beta1 * m[c] + (1.0 - cfg.adam_beta1) * g[c];
            v[c] = cfg.adam_beta2 * v[c] + (1.0 - cfg.adam_beta2) * g[c] * g[c];
            let m_hat = m[c] / bc1;
            let v_hat = v[c] / bc2;
            p[c] -= lrs[c] * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
        volume.attributes_mut()[index] = GaussianAttributes::from_channels(&p);
    }
    Ok(())
}
