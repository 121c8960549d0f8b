use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Camera, GaussianAttributes, GaussianVolume};

use super::covariance::{covariance3d, covariance3d_backward};
use super::project::{project_backward, Projection};
use super::raster::{forward, row_candidates, Forward, RenderOptions, RowWalk};
use super::TILE_SIZE;

/// Per-Gaussian loss partials for one backward pass, indexed by grid index.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffer {
    pub grads: Vec<GaussianAttributes>,
    /// Accumulated `‖∂L/∂mean2d‖`, pixels.
    pub viewspace_grad_norm: Vec<f64>,
    /// Number of views that contributed to `viewspace_grad_norm`.
    pub viewspace_hits: Vec<u32>,
}

impl GradientBuffer {
    pub fn zeros(len: usize) -> Self {
        GradientBuffer {
            grads: vec![GaussianAttributes::default(); len],
            viewspace_grad_norm: vec![0.0; len],
            viewspace_hits: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Mean view-space gradient norm per Gaussian (zero where never visible).
    pub fn mean_viewspace_norm(&self, index: usize) -> f64 {
        match self.viewspace_hits[index] {
            0 => 0.0,
            n => self.viewspace_grad_norm[index] / n as f64,
        }
    }

    /// Adds another pass's view-space statistics into this one.
    pub fn accumulate_viewspace(&mut self, other: &GradientBuffer) {
        for i in 0..self.len() {
            self.viewspace_grad_norm[i] += other.viewspace_grad_norm[i];
            self.viewspace_hits[i] += other.viewspace_hits[i];
        }
    }

    pub fn reset_viewspace(&mut self) {
        self.viewspace_grad_norm.fill(0.0);
        self.viewspace_hits.fill(0);
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct SplatGrad {
    mean2d: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for i in 0..2 {
            self.mean2d[i] += o.mean2d[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
    }
}


/// Exact gradients of a scalar loss whose image gradient is `upstream`
/// (row-major, three values per pixel) with respect to every active
/// Gaussian's stored attributes. The forward pass is recomputed per tile.
pub fn render_backward(
    volume: &GaussianVolume,
    cam: &Camera,
    background: [f64; 3],
    upstream: &[f64],
) -> Result<GradientBuffer> {
    render_backward_with_options(volume, cam, background, upstream, &RenderOptions::default())
}

pub fn render_backward_with_options(
    volume: &GaussianVolume,
    cam: &Camera,
    background: [f64; 3],
    upstream: &[f64],
    options: &RenderOptions,
) -> Result<GradientBuffer> {
    check_upstream(cam, upstream)?;
    let fwd = forward(volume, cam, background, options)?;
    backward_from(volume, cam, &fwd, upstream, options)
}

fn check_upstream(cam: &Camera, upstream: &[f64]) -> Result<()> {
    if upstream.len() != cam.width * cam.height * 3 {
        return Err(Error::State(format!(
            "upstream gradient has {} values, camera image is {}x{}x3",
            upstream.len(),
            cam.width,
            cam.height
        )));
    }
    Ok(())
}

/// Backward pass reusing a forward pass of the same volume and camera.
/// Each pixel is walked back to front from its final transmittance.
pub(crate) fn backward_from(
    volume: &GaussianVolume,
    cam: &Camera,
    fwd: &Forward,
    upstream: &[f64],
    options: &RenderOptions,
) -> Result<GradientBuffer> {
    check_upstream(cam, upstream)?;
    if fwd.image.width != cam.width || fwd.image.height != cam.height {
        return Err(Error::State("forward pass was rendered for another camera".into()));
    }
    let prep = &fwd.prep;
    let splats = &prep.splats;
    let background = fwd.background;

    let tile_grads = |tile: usize| -> Vec<SplatGrad> {
        let list = &prep.tiles[tile];
        let mut acc = vec![SplatGrad::default(); list.len()];
        if list.is_empty() {
            return acc;
        }
        let (xs, ys) = prep.tile_pixels(tile, cam);
        let mut row = Vec::new();
        for y in ys {
            let mut g = [[0.0; 3]; TILE_SIZE];
            let mut t = [0.0; TILE_SIZE];
            let mut stop = [0u32; TILE_SIZE];
            let mut any = false;
            for (i, x) in xs.clone().enumerate() {
                let p = y * cam.width + x;
                g[i] = [upstream[3 * p], upstream[3 * p + 1], upstream[3 * p + 2]];
                t[i] = fwd.image.transmittance[p];
                stop[i] = fwd.stop[p];
                any |= g[i] != [0.0; 3];
            }
            if !any {
                continue;
            }
            row_candidates(splats, list, y, &xs, &mut row);

            // back to front; `rest` is the normalized color behind the current splat
            let mut rest = [background; TILE_SIZE];
            for (k, r) in row.iter().enumerate().rev() {
                let s = &splats[r.id as usize];
                let [a, b, cc] = s.conic;
                let col = [s.color.x, s.color.y, s.color.z];
                let out = &mut acc[r.slot as usize];
                let mut walk = RowWalk::new(s, r.x_lo as f64, y as f64);
                for x in r.x_lo..r.x_end {
                    let i = x as usize - xs.start;
                    let falloff = walk.falloff;
                    walk.advance();
                    if k as u32 > stop[i] || g[i] == [0.0; 3] {
                        continue;
                    }
                    let Some(smp) = s.sample(x as f64, y as f64, falloff) else {
                        continue;
                    };
                    t[i] /= 1.0 - smp.alpha;
                    let ti = t[i];
                    let w = smp.alpha * ti;
                    let mut d_alpha = 0.0;
                    for c in 0..3 {
                        out.color[c] += w * g[i][c];
                        d_alpha += ti * (col[c] - rest[i][c]) * g[i][c];
                        rest[i][c] = smp.alpha * col[c] + (1.0 - smp.alpha) * rest[i][c];
                    }
                    if smp.clamped {
                        continue;
                    }
                    out.opacity += d_alpha * smp.falloff;
                    // d(alpha)/d(power) = alpha
                    let d_power = d_alpha * smp.alpha;
                    out.mean2d[0] += d_power * (a * smp.dx + b * smp.dy);
                    out.mean2d[1] += d_power * (b * smp.dx + cc * smp.dy);
                    out.conic[0] += -0.5 * d_power * smp.dx * smp.dx;
                    out.conic[1] += -d_power * smp.dx * smp.dy;
                    out.conic[2] += -0.5 * d_power * smp.dy * smp.dy;
                }
            }
        }
        acc
    };

    let per_tile: Vec<Vec<SplatGrad>> = if options.parallel {
        (0..prep.tiles.len()).into_par_iter().map(tile_grads).collect()
    } else {
        (0..prep.tiles.len()).map(tile_grads).collect()
    };

    // serial reduction in tile order keeps sums independent of scheduling
    let mut totals = vec![SplatGrad::default(); splats.len()];
    for (tile, grads) in per_tile.iter().enumerate() {
        for (slot, g) in grads.iter().enumerate() {
            totals[prep.tiles[tile][slot] as usize].add(g);
        }
    }

    let mut buffer = GradientBuffer::zeros(volume.len());
    for (s, g) in splats.iter().zip(&totals) {
        let index = s.source_index;
        let attrs = &volume.attributes()[index];
        let sigma = covariance3d(&attrs.log_scale, &attrs.rotation)?;
        let mu = volume.center(index);
        let proj = Projection {
            mean2d: s.mean2d,
            cov2d: s.cov2d,
            depth: s.depth,
            half_extent: s.half_extent,
        };
        let grad_mean2d = Vector2::new(g.mean2d[0], g.mean2d[1]);
        let pg = project_backward(&mu, &sigma, cam, &proj, &grad_mean2d, &g.conic);
        let (d_log_scale, d_rotation) =
            covariance3d_backward(&attrs.log_scale, &attrs.rotation, &pg.sigma)?;
        let opacity = s.opacity;
        let out = &mut buffer.grads[index];
        out.offset = <[f64; 3]>::from(Vector3::from(pg.mu));
        out.log_scale = d_log_scale;
        out.rotation = d_rotation;
        out.opacity_logit = g.opacity * opacity * (1.0 - opacity);
        out.color = g.color;
        buffer.viewspace_grad_norm[index] = grad_mean2d.norm();
        buffer.viewspace_hits[index] = 1;
    }
    Ok(buffer)
}
