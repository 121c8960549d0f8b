//! Differentiable tile-based rasterizer for a [`GaussianVolume`].
//!
//! Only active Gaussians are drawn. Splats are sorted once per view by
//! camera-space depth (ties broken by grid index) and composited front to back.
//! A splat touches exactly the pixels inside its footprint ellipse, where the
//! falloff is at least `1e-8`. Tiles and per-row spans only narrow the
//! candidates, so the tiled path, its serial variant and [`render_reference`]
//! agree bit for bit.

mod backward;
mod covariance;
mod project;
mod raster;

pub(crate) use backward::backward_from;
pub use backward::{render_backward, render_backward_with_options, GradientBuffer};
pub use covariance::{covariance3d, covariance3d_backward, quat_to_matrix};
pub use project::{project, project_backward, Projection, ProjectionGrad};
pub(crate) use raster::forward;
pub use raster::{render, render_reference, render_with_options, ProjectedSplat, RenderOptions};

/// Added to both diagonal entries of every screen-space covariance (pixels²).
pub const LOW_PASS: f64 = 0.3;
/// Upper clamp on a single splat's per-pixel alpha.
pub const ALPHA_MAX: f64 = 0.99;
/// Compositing of a pixel stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Gaussians at or in front of this camera-space depth are culled.
pub const NEAR_PLANE: f64 = 0.2;
/// Tile edge in pixels.
pub const TILE_SIZE: usize = 16;
/// Squared Mahalanobis radius of a splat's footprint, `-2 ln 1e-8`: a splat
/// covers the pixels where its falloff is at least `1e-8`, so the cutoff
/// changes a pixel by at most that much.
pub const FOOTPRINT_RADIUS_SQ: f64 = 36.841_361_487_904_734;
