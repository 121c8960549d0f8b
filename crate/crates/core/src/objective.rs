//! Image metrics and training losses, each with its analytic gradient.
//!
//! Images are compared as interleaved linear RGB. SSIM uses an 11×11 Gaussian
//! window (σ = 1.5) applied as a zero-padded "same" filter per channel, with
//! `C1 = 0.01²`, `C2 = 0.03²`, and is averaged over pixels and channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GaussianVolume, ImageBuffer, CHANNELS};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Weights of the fitting and stage-two losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// L1 weight in the fitting loss.
    pub lambda_l1: f64,
    /// `1 - SSIM` weight in the fitting loss.
    pub lambda_ssim: f64,
    /// Offset regularizer weight in the fitting loss.
    pub lambda_offsets: f64,
    /// L1 share of the stage-two image loss; SSIM gets the rest.
    pub lambda_2d_mix: f64,
    pub lambda_3d: f64,
    pub lambda_2d: f64,
    /// Hinge radius for offsets, world units. `None` resolves to half a voxel.
    pub epsilon_offsets: Option<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_l1: 0.8,
            lambda_ssim: 0.2,
            lambda_offsets: 0.1,
            lambda_2d_mix: 0.8,
            lambda_3d: 1.0,
            lambda_2d: 0.1,
            epsilon_offsets: None,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_l1", self.lambda_l1),
            ("lambda_ssim", self.lambda_ssim),
            ("lambda_offsets", self.lambda_offsets),
            ("lambda_3d", self.lambda_3d),
            ("lambda_2d", self.lambda_2d),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda_2d_mix) {
            return Err(Error::Config(format!(
                "lambda_2d_mix must lie in [0, 1], got {}",
                self.lambda_2d_mix
            )));
        }
        if let Some(eps) = self.epsilon_offsets {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("epsilon_offsets must be > 0, got {eps}")));
            }
        }
        Ok(())
    }

    /// `epsilon_offsets`, or half the smallest lattice spacing of `volume`.
    pub fn epsilon_for(&self, volume: &GaussianVolume) -> f64 {
        self.epsilon_offsets
            .unwrap_or_else(|| 0.5 * volume.spacing().min())
    }
}

/// Scalar image comparison terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageTerms {
    pub l1: f64,
    pub ssim: f64,
    /// `+inf` when the images are identical.
    pub psnr: f64,
}

fn check_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_shape(b) || a.rgb.len() != b.rgb.len() {
        return Err(Error::Shape(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn l1(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shape(a, b)?;
    Ok(a.rgb.iter().zip(&b.rgb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.rgb.len() as f64)
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shape(a, b)?;
    Ok(a.rgb.iter().zip(&b.rgb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.rgb.len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn image_terms(rendered: &ImageBuffer, target: &ImageBuffer) -> Result<ImageTerms> {
    Ok(ImageTerms {
        l1: l1(rendered, target)?,
        ssim: ssim(rendered, target)?,
        psnr: psnr(rendered, target)?,
    })
}

/// Normalized 1D Gaussian taps of the SSIM window.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable zero-padded "same" filtering with the (symmetric) SSIM window.
/// Being symmetric, the filter is its own adjoint.
fn blur(plane: &[f64], width: usize, height: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut s = 0.0;
            for (t, w) in k.iter().enumerate() {
                let xx = x as isize + t as isize - r;
                if xx >= 0 && (xx as usize) < width {
                    s += w * row[xx as usize];
                }
            }
            tmp[y * width + x] = s;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for (t, w) in k.iter().enumerate() {
                let yy = y as isize + t as isize - r;
                if yy >= 0 && (yy as usize) < height {
                    s += w * tmp[yy as usize * width + x];
                }
            }
            out[y * width + x] = s;
        }
    }
    out
}

fn channel_plane(img: &ImageBuffer, c: usize) -> Vec<f64> {
    img.rgb.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM, and optionally its gradient with respect to `a`.
fn ssim_impl(a: &ImageBuffer, b: &ImageBuffer, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let (w, h) = (a.width, a.height);
    let n = (w * h) as f64 * 3.0;
    let k = ssim_kernel();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; a.rgb.len()]);
    for c in 0..3 {
        let x = channel_plane(a, c);
        let y = channel_plane(b, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mu_x = blur(&x, w, h, &k);
        let mu_y = blur(&y, w, h, &k);
        let e_xx = blur(&xx, w, h, &k);
        let e_yy = blur(&yy, w, h, &k);
        let e_xy = blur(&xy, w, h, &k);

        let len = x.len();
        let mut d_mu = vec![0.0; len];
        let mut d_var = vec![0.0; len];
        let mut d_cov = vec![0.0; len];
        for i in 0..len {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * cov + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = var_x + var_y + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let ds_dmu = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
                let ds_dvar = -s / b2;
                let ds_dcov = 2.0 * a1 / (b1 * b2);
                d_mu[i] = ds_dmu - 2.0 * mx * ds_dvar - my * ds_dcov;
                d_var[i] = ds_dvar;
                d_cov[i] = ds_dcov;
            }
        }
        if let Some(g) = grad.as_mut() {
            let bm = blur(&d_mu, w, h, &k);
            let bv = blur(&d_var, w, h, &k);
            let bc = blur(&d_cov, w, h, &k);
            for i in 0..len {
                g[3 * i + c] = (bm[i] + 2.0 * x[i] * bv[i] + y[i] * bc[i]) / n;
            }
        }
    }
    (total / n, grad)
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shape(a, b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// SSIM and `∂ssim/∂a` (interleaved like `a.rgb`).
pub fn ssim_with_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, Vec<f64>)> {
    check_shape(a, b)?;
    let (s, g) = ssim_impl(a, b, true);
    Ok((s, g.expect("gradient requested")))
}

/// L1 and `∂l1/∂a`; the subgradient at ties is zero.
pub fn l1_with_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, Vec<f64>)> {
    check_shape(a, b)?;
    let n = a.rgb.len() as f64;
    let grad = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .map(|(x, y)| {
            let d = x - y;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((l1(a, b)?, grad))
}

/// Mean over active Gaussians and axes of `max(0, |Δμ| - ε)`.
pub fn offsets_reg(volume: &GaussianVolume, epsilon: f64) -> f64 {
    offsets_reg_with_grad(volume, epsilon).0
}

/// Offset hinge and its gradient per grid index (zero for inactive points).
pub fn offsets_reg_with_grad(volume: &GaussianVolume, epsilon: f64) -> (f64, Vec<[f64; 3]>) {
    let mut grad = vec![[0.0; 3]; volume.len()];
    let active = volume.active_count();
    if active == 0 {
        return (0.0, grad);
    }
    let denom = 3.0 * active as f64;
    let mut sum = 0.0;
    for i in volume.active_indices() {
        let off = &volume.attributes()[i].offset;
        for a in 0..3 {
            let excess = off[a].abs() - epsilon;
            if excess > 0.0 {
                sum += excess;
                grad[i][a] = off[a].signum() / denom;
            }
        }
    }
    (sum / denom, grad)
}

/// Value and gradients of the fitting loss.
#[derive(Clone, Debug)]
pub struct FittingLoss {
    pub total: f64,
    pub l1: f64,
    pub ssim: f64,
    pub offsets: f64,
    pub psnr: f64,
    /// `∂L/∂rendered`, interleaved RGB.
    pub image_grad: Vec<f64>,
    /// `∂L/∂Δμ` from the regularizer, per grid index.
    pub offset_grad: Vec<[f64; 3]>,
}

/// `λ1 L1 + λ2 (1 - SSIM) + λ3 L_offsets`.
pub fn fitting_loss(
    rendered: &ImageBuffer,
    target: &ImageBuffer,
    volume: &GaussianVolume,
    weights: &LossWeights,
) -> Result<FittingLoss> {
    let (l1, g_l1) = l1_with_grad(rendered, target)?;
    let (ssim, g_ssim) = ssim_with_grad(rendered, target)?;
    let eps = weights.epsilon_for(volume);
    let (offsets, mut offset_grad) = offsets_reg_with_grad(volume, eps);
    let image_grad = g_l1
        .iter()
        .zip(&g_ssim)
        .map(|(a, b)| weights.lambda_l1 * a - weights.lambda_ssim * b)
        .collect();
    for g in offset_grad.iter_mut() {
        for v in g.iter_mut() {
            *v *= weights.lambda_offsets;
        }
    }
    Ok(FittingLoss {
        total: weights.lambda_l1 * l1
            + weights.lambda_ssim * (1.0 - ssim)
            + weights.lambda_offsets * offsets,
        l1,
        ssim,
        offsets,
        psnr: psnr(rendered, target)?,
        image_grad,
        offset_grad,
    })
}

/// Value and gradients of the stage-two loss.
#[derive(Clone, Debug)]
pub struct Stage2Loss {
    pub total: f64,
    pub l3d: f64,
    pub l2d: f64,
    /// `∂L/∂pred`, one 14-channel record per grid index.
    pub volume_grad: Vec<[f64; CHANNELS]>,
    /// `∂L/∂rendered`.
    pub image_grad: Vec<f64>,
}

/// `λ3D · MSE(pred, gt) + λ2D · (λ L1 + (1 - λ)(1 - SSIM))`, the MSE taken over
/// all raw stored channels of all grid points.
pub fn stage2_losses(
    pred: &GaussianVolume,
    gt: &GaussianVolume,
    rendered: &ImageBuffer,
    target: &ImageBuffer,
    weights: &LossWeights,
) -> Result<Stage2Loss> {
    if pred.resolution() != gt.resolution() {
        return Err(Error::Shape(format!(
            "volume resolutions differ: {} vs {}",
            pred.resolution(),
            gt.resolution()
        )));
    }
    let count = (pred.len() * CHANNELS) as f64;
    let mut sq = 0.0;
    let mut volume_grad = Vec::with_capacity(pred.len());
    for (p, g) in pred.attributes().iter().zip(gt.attributes()) {
        let (pc, gc) = (p.to_channels(), g.to_channels());
        let mut rec = [0.0; CHANNELS];
        for i in 0..CHANNELS {
            let d = pc[i] - gc[i];
            sq += d * d;
            rec[i] = weights.lambda_3d * 2.0 * d / count;
        }
        volume_grad.push(rec);
    }
    let l3d = sq / count;
    let (l1, g_l1) = l1_with_grad(rendered, target)?;
    let (ssim, g_ssim) = ssim_with_grad(rendered, target)?;
    let mix = weights.lambda_2d_mix;
    let l2d = mix * l1 + (1.0 - mix) * (1.0 - ssim);
    let image_grad = g_l1
        .iter()
        .zip(&g_ssim)
        .map(|(a, b)| weights.lambda_2d * (mix * a - (1.0 - mix) * b))
        .collect();
    Ok(Stage2Loss {
        total: weights.lambda_3d * l3d + weights.lambda_2d * l2d,
        l3d,
        l2d,
        volume_grad,
        image_grad,
    })
}
