use std::cmp::Ordering;

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{activate, Camera, GaussianVolume, ImageBuffer};

use super::covariance::covariance3d;
use super::project::project;
use super::{ALPHA_MAX, FOOTPRINT_RADIUS_SQ, MIN_TRANSMITTANCE, TILE_SIZE};

/// A Gaussian ready for compositing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedSplat {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub color: Vector3<f64>,
    pub opacity: f64,
    pub source_index: usize,
    pub(crate) conic: [f64; 3],
    pub(crate) half_extent: Vector2<f64>,
}

impl ProjectedSplat {
    /// Falloff and clamped alpha at pixel `(px, py)`, or `None` when the pixel
    /// lies outside the splat's footprint ellipse.
    ///
    /// Along a row the falloff is computed with `exp` at the first covered
    /// pixel of each tile-wide block and carried across the block by
    /// [`RowWalk`]. This per-pixel version replays that walk, so it returns
    /// exactly what the tiled loops compute.
    pub(crate) fn evaluate(&self, px: usize, py: usize) -> Option<Sample> {
        let dx = px as f64 - self.mean2d.x;
        let dy = py as f64 - self.mean2d.y;
        if dx.abs() > self.half_extent.x || dy.abs() > self.half_extent.y {
            return None;
        }
        let (lo, _) = self.row_span(py as f64)?;
        let start = span_start(lo, px / TILE_SIZE * TILE_SIZE);
        if (px as f64) < start {
            return None;
        }
        let mut walk = RowWalk::new(self, start, py as f64);
        for _ in start as usize..px {
            walk.advance();
        }
        self.sample(px as f64, py as f64, walk.falloff)
    }

    /// Alpha at `(px, py)` given the falloff there, or `None` outside the
    /// footprint ellipse.
    #[inline(always)]
    pub(crate) fn sample(&self, px: f64, py: f64, falloff: f64) -> Option<Sample> {
        let dx = px - self.mean2d.x;
        let dy = py - self.mean2d.y;
        let [a, b, c] = self.conic;
        let mahalanobis_sq = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        if mahalanobis_sq > FOOTPRINT_RADIUS_SQ {
            return None;
        }
        let raw = self.opacity * falloff;
        let clamped = raw > ALPHA_MAX;
        Some(Sample {
            alpha: if clamped { ALPHA_MAX } else { raw },
            falloff,
            clamped,
            dx,
            dy,
        })
    }

    /// Columns `[lo, hi]` where row `py` may meet the footprint ellipse. The
    /// span is padded so rounding never loses a pixel that [`Self::evaluate`]
    /// accepts; it only narrows the candidates.
    #[inline(always)]
    fn row_span(&self, py: f64) -> Option<(f64, f64)> {
        let dy = py - self.mean2d.y;
        if dy.abs() > self.half_extent.y {
            return None;
        }
        let [a, b, c] = self.conic;
        let k = FOOTPRINT_RADIUS_SQ * (1.0 + 1e-9);
        let disc = (b * dy) * (b * dy) - a * (c * dy * dy - k);
        if disc < 0.0 {
            return None;
        }
        let centre = self.mean2d.x - b * dy / a;
        let r = disc.sqrt() / a + 1e-9;
        Some((centre - r, centre + r))
    }
}

/// First column of a row span inside the block starting at `block_start`.
#[inline(always)]
fn span_start(lo: f64, block_start: usize) -> f64 {
    lo.ceil().max(block_start as f64)
}

/// `exp(-m/2)` along a pixel row, stepping one column at a time. The
/// exponent's forward difference grows by `a` per column, so each step is
/// two multiplications.
pub(crate) struct RowWalk {
    pub falloff: f64,
    ratio: f64,
    step: f64,
}

impl RowWalk {
    #[inline(always)]
    pub fn new(s: &ProjectedSplat, px: f64, py: f64) -> Self {
        let dx = px - s.mean2d.x;
        let dy = py - s.mean2d.y;
        let [a, b, c] = s.conic;
        let m = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        RowWalk {
            falloff: (-0.5 * m).exp(),
            ratio: (-(a * (dx + 0.5) + b * dy)).exp(),
            step: (-a).exp(),
        }
    }

    #[inline(always)]
    pub fn advance(&mut self) {
        self.falloff *= self.ratio;
        self.ratio *= self.step;
    }
}

/// A splat that can reach a given pixel row of a tile.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RowCandidate {
    /// Position in the tile's list.
    pub slot: u32,
    pub id: u32,
    pub x_lo: u32,
    /// One past the last column.
    pub x_end: u32,
}

/// Fills `out` with the splats of `list` whose footprint may cover pixels of
/// row `y` within columns `xs`, keeping compositing order.
pub(crate) fn row_candidates(
    splats: &[ProjectedSplat],
    list: &[u32],
    y: usize,
    xs: &std::ops::Range<usize>,
    out: &mut Vec<RowCandidate>,
) {
    out.clear();
    let last = (xs.end - 1) as f64;
    for (slot, &id) in list.iter().enumerate() {
        let Some((lo, hi)) = splats[id as usize].row_span(y as f64) else {
            continue;
        };
        let lo = span_start(lo, xs.start);
        let hi = hi.floor().min(last);
        if lo <= hi {
            out.push(RowCandidate {
                slot: slot as u32,
                id,
                x_lo: lo as u32,
                x_end: hi as u32 + 1,
            });
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Sample {
    pub alpha: f64,
    pub falloff: f64,
    pub clamped: bool,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct RenderOptions {
    /// Distribute tiles over the rayon pool.
    pub parallel: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { parallel: true }
    }
}

/// Depth-sorted splats and per-tile lists of splat ids.
pub(crate) struct Prepared {
    pub splats: Vec<ProjectedSplat>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
}

impl Prepared {
    pub fn tile_pixels(&self, tile: usize, cam: &Camera) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        (x0..(x0 + TILE_SIZE).min(cam.width), y0..(y0 + TILE_SIZE).min(cam.height))
    }
}

pub(crate) fn prepare(volume: &GaussianVolume, cam: &Camera) -> Result<Prepared> {
    cam.validate()?;
    let mut splats = Vec::new();
    for index in volume.active_indices() {
        let attrs = &volume.attributes()[index];
        if let Some(channel) = attrs.first_non_finite() {
            return Err(Error::Render { index, channel });
        }
        let act = activate(attrs).map_err(|_| Error::Render {
            index,
            channel: "rotation",
        })?;
        let sigma = covariance3d(&attrs.log_scale, &attrs.rotation)?;
        let mu = volume.center(index);
        if let Some(p) = project(&mu, &sigma, cam) {
            splats.push(ProjectedSplat {
                mean2d: p.mean2d,
                cov2d: p.cov2d,
                depth: p.depth,
                color: act.color,
                opacity: act.opacity,
                source_index: index,
                conic: p.conic(),
                half_extent: p.half_extent,
            });
        }
    }
    splats.sort_by(|a, b| match a.depth.total_cmp(&b.depth) {
        Ordering::Equal => a.source_index.cmp(&b.source_index),
        o => o,
    });

    let tiles_x = cam.width.div_ceil(TILE_SIZE);
    let tiles_y = cam.height.div_ceil(TILE_SIZE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    let max_x = (cam.width - 1) as f64;
    let max_y = (cam.height - 1) as f64;
    for (id, s) in splats.iter().enumerate() {
        let x_lo = (s.mean2d.x - s.half_extent.x).ceil().max(0.0);
        let x_hi = (s.mean2d.x + s.half_extent.x).floor().min(max_x);
        let y_lo = (s.mean2d.y - s.half_extent.y).ceil().max(0.0);
        let y_hi = (s.mean2d.y + s.half_extent.y).floor().min(max_y);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        let (tx0, tx1) = (x_lo as usize / TILE_SIZE, x_hi as usize / TILE_SIZE);
        let (ty0, ty1) = (y_lo as usize / TILE_SIZE, y_hi as usize / TILE_SIZE);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * tiles_x + tx].push(id as u32);
            }
        }
    }
    Ok(Prepared {
        splats,
        tiles,
        tiles_x,
    })
}

/// Front-to-back compositing of one pixel over the given candidate splats.
#[inline]
pub(crate) fn shade_pixel<'a>(
    splats: &[ProjectedSplat],
    candidates: impl Iterator<Item = &'a u32>,
    px: usize,
    py: usize,
    background: &[f64; 3],
) -> ([f64; 3], f64) {
    let mut t = 1.0;
    let mut rgb = [0.0; 3];
    for &id in candidates {
        let s = &splats[id as usize];
        let Some(sample) = s.evaluate(px, py) else {
            continue;
        };
        let w = sample.alpha * t;
        rgb[0] += s.color.x * w;
        rgb[1] += s.color.y * w;
        rgb[2] += s.color.z * w;
        t *= 1.0 - sample.alpha;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    for c in 0..3 {
        rgb[c] += t * background[c];
    }
    (rgb, t)
}

pub fn render(volume: &GaussianVolume, cam: &Camera, background: [f64; 3]) -> Result<ImageBuffer> {
    render_with_options(volume, cam, background, &RenderOptions::default())
}

pub fn render_with_options(
    volume: &GaussianVolume,
    cam: &Camera,
    background: [f64; 3],
    options: &RenderOptions,
) -> Result<ImageBuffer> {
    Ok(forward(volume, cam, background, options)?.image)
}

/// What the backward pass needs from a forward pass.
pub(crate) struct Forward {
    pub prep: Prepared,
    pub background: [f64; 3],
    pub image: ImageBuffer,
    /// Per pixel, the row-candidate index at which compositing terminated,
    /// or `u32::MAX` when it ran through the whole row list.
    pub stop: Vec<u32>,
}

pub(crate) fn forward(
    volume: &GaussianVolume,
    cam: &Camera,
    background: [f64; 3],
    options: &RenderOptions,
) -> Result<Forward> {
    let prep = prepare(volume, cam)?;
    let shade_tile = |tile: usize| -> Vec<([f64; 3], f64, u32)> {
        let (xs, ys) = prep.tile_pixels(tile, cam);
        let list = &prep.tiles[tile];
        let width = xs.len();
        let mut out = Vec::with_capacity(width * ys.len());
        let mut row = Vec::new();
        for y in ys {
            row_candidates(&prep.splats, list, y, &xs, &mut row);
            // splat-major over the row; each pixel still sees its splats in depth order
            let mut rgb = [[0.0; 3]; TILE_SIZE];
            let mut t = [1.0; TILE_SIZE];
            let mut stop = [u32::MAX; TILE_SIZE];
            let mut done = [false; TILE_SIZE];
            let mut live = width;
            for (k, r) in row.iter().enumerate() {
                let s = &prep.splats[r.id as usize];
                let mut walk = RowWalk::new(s, r.x_lo as f64, y as f64);
                for x in r.x_lo..r.x_end {
                    let i = x as usize - xs.start;
                    let falloff = walk.falloff;
                    walk.advance();
                    if done[i] {
                        continue;
                    }
                    let Some(sample) = s.sample(x as f64, y as f64, falloff) else {
                        continue;
                    };
                    let w = sample.alpha * t[i];
                    rgb[i][0] += s.color.x * w;
                    rgb[i][1] += s.color.y * w;
                    rgb[i][2] += s.color.z * w;
                    t[i] *= 1.0 - sample.alpha;
                    if t[i] < MIN_TRANSMITTANCE {
                        stop[i] = k as u32;
                        done[i] = true;
                        live -= 1;
                    }
                }
                if live == 0 {
                    break;
                }
            }
            for i in 0..width {
                let mut px = rgb[i];
                for c in 0..3 {
                    px[c] += t[i] * background[c];
                }
                out.push((px, t[i], stop[i]));
            }
        }
        out
    };
    let blocks: Vec<_> = if options.parallel {
        (0..prep.tiles.len()).into_par_iter().map(shade_tile).collect()
    } else {
        (0..prep.tiles.len()).map(shade_tile).collect()
    };

    let mut image = ImageBuffer::filled(cam.width, cam.height, background);
    let mut stop = vec![u32::MAX; cam.width * cam.height];
    for (tile, block) in blocks.into_iter().enumerate() {
        let (xs, ys) = prep.tile_pixels(tile, cam);
        let mut it = block.into_iter();
        for y in ys {
            for x in xs.clone() {
                let (rgb, t, k) = it.next().expect("tile block sized to its pixels");
                let p = y * cam.width + x;
                image.rgb[p * 3..p * 3 + 3].copy_from_slice(&rgb);
                image.transmittance[p] = t;
                stop[p] = k;
            }
        }
    }
    Ok(Forward {
        prep,
        background,
        image,
        stop,
    })
}

/// Untiled single-threaded path: every pixel walks the full depth-sorted list.
pub fn render_reference(
    volume: &GaussianVolume,
    cam: &Camera,
    background: [f64; 3],
) -> Result<ImageBuffer> {
    let prep = prepare(volume, cam)?;
    let all: Vec<u32> = (0..prep.splats.len() as u32).collect();
    let mut image = ImageBuffer::filled(cam.width, cam.height, background);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (rgb, t) = shade_pixel(&prep.splats, all.iter(), x, y, &background);
            let p = y * cam.width + x;
            image.rgb[p * 3..p * 3 + 3].copy_from_slice(&rgb);
            image.transmittance[p] = t;
        }
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use nalgebra::Matrix3;

    use super::*;
    use crate::model::{logit, Bounds, GaussianAttributes};

    fn camera() -> Camera {
        // at (0,0,-3) looking at the origin along +z
        Camera::new(
            33,
            33,
            40.0,
            40.0,
            16.0,
            16.0,
            Matrix3::identity(),
            Vector3::new(0.0, 0.0, 3.0),
        )
        .unwrap()
    }

    fn empty_volume() -> GaussianVolume {
        let mut v = GaussianVolume::filled(
            3,
            Bounds::unit(),
            GaussianAttributes {
                rotation: [1.0, 0.0, 0.0, 0.0],
                log_scale: [(0.05f64).ln(); 3],
                ..Default::default()
            },
        )
        .unwrap();
        for i in 0..v.len() {
            v.set_active(i, false);
        }
        v
    }

    #[test]
    fn empty_scene_is_background() {
        let bg = [0.2, 0.4, 0.6];
        let img = render(&empty_volume(), &camera(), bg).unwrap();
        for y in 0..img.height {
            for x in 0..img.width {
                assert_eq!(img.pixel(x, y), bg);
            }
        }
        assert!(img.transmittance.iter().all(|t| *t == 1.0));
    }

    #[test]
    fn single_splat_center_pixel() {
        let mut v = empty_volume();
        let centre = v.index_of([1, 1, 1]);
        v.set_active(centre, true);
        let a = &mut v.attributes_mut()[centre];
        a.opacity_logit = logit(0.8);
        a.color = [0.9, 0.1, 0.3];
        let bg = [1.0, 1.0, 1.0];
        let img = render(&v, &camera(), bg).unwrap();
        let px = img.pixel(16, 16);
        for c in 0..3 {
            let expected = 0.8 * [0.9, 0.1, 0.3][c] + 0.2 * bg[c];
            assert!((px[c] - expected).abs() < 1e-12);
        }
        assert!((img.transmittance[16 * 33 + 16] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn non_finite_attribute_names_gaussian() {
        let mut v = empty_volume();
        v.set_active(5, true);
        v.attributes_mut()[5].color[1] = f64::NAN;
        match render(&v, &camera(), [0.0; 3]) {
            Err(Error::Render { index: 5, channel: "color" }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}

