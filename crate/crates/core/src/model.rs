//! The lattice of Gaussians and the small value types shared by every stage.
//!
//! A [`GaussianVolume`] owns exactly `N³` Gaussians, one per lattice point, stored
//! in lexicographic grid order with `z` varying fastest: the point at grid
//! coordinates `(i, j, k)` lives at index `(i * N + j) * N + k`. That order is the
//! on-disk order as well, so it must not change.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Number of stored channels per Gaussian: offset(3) + log_scale(3) + rotation(4) + opacity(1) + color(3).
pub const CHANNELS: usize = 14;

/// Named groups of channels, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelGroup {
    Offset,
    LogScale,
    Rotation,
    OpacityLogit,
    Color,
}

impl ChannelGroup {
    pub const ALL: [ChannelGroup; 5] = [
        ChannelGroup::Offset,
        ChannelGroup::LogScale,
        ChannelGroup::Rotation,
        ChannelGroup::OpacityLogit,
        ChannelGroup::Color,
    ];

    pub fn range(self) -> std::ops::Range<usize> {
        match self {
            ChannelGroup::Offset => 0..3,
            ChannelGroup::LogScale => 3..6,
            ChannelGroup::Rotation => 6..10,
            ChannelGroup::OpacityLogit => 10..11,
            ChannelGroup::Color => 11..14,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelGroup::Offset => "offset",
            ChannelGroup::LogScale => "log_scale",
            ChannelGroup::Rotation => "rotation",
            ChannelGroup::OpacityLogit => "opacity_logit",
            ChannelGroup::Color => "color",
        }
    }

    pub fn of_channel(channel: usize) -> ChannelGroup {
        match channel {
            0..=2 => ChannelGroup::Offset,
            3..=5 => ChannelGroup::LogScale,
            6..=9 => ChannelGroup::Rotation,
            10 => ChannelGroup::OpacityLogit,
            _ => ChannelGroup::Color,
        }
    }
}

/// Raw (pre-activation) parameters of one Gaussian.
///
/// The same layout doubles as a per-Gaussian gradient record.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianAttributes {
    /// Displacement of the center from its lattice point, world units.
    pub offset: [f64; 3],
    /// Natural log of the per-axis standard deviation.
    pub log_scale: [f64; 3],
    /// Unnormalized quaternion `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    /// Linear RGB, degree-0 only.
    pub color: [f64; 3],
}

impl GaussianAttributes {
    pub fn to_channels(&self) -> [f64; CHANNELS] {
        let mut c = [0.0; CHANNELS];
        c[0..3].copy_from_slice(&self.offset);
        c[3..6].copy_from_slice(&self.log_scale);
        c[6..10].copy_from_slice(&self.rotation);
        c[10] = self.opacity_logit;
        c[11..14].copy_from_slice(&self.color);
        c
    }

    pub fn from_channels(c: &[f64; CHANNELS]) -> Self {
        GaussianAttributes {
            offset: [c[0], c[1], c[2]],
            log_scale: [c[3], c[4], c[5]],
            rotation: [c[6], c[7], c[8], c[9]],
            opacity_logit: c[10],
            color: [c[11], c[12], c[13]],
        }
    }

    /// Name of the first channel group holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let c = self.to_channels();
        c.iter()
            .position(|v| !v.is_finite())
            .map(|i| ChannelGroup::of_channel(i).name())
    }

    pub fn is_zero(&self) -> bool {
        self.to_channels().iter().all(|&v| v == 0.0)
    }
}

/// Activated parameters as consumed by the rasterizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Activated {
    pub scale: Vector3<f64>,
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub color: Vector3<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn normalize_quaternion(q: &[f64; 4]) -> Result<[f64; 4]> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateRotation);
    }
    Ok([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm])
}

/// Applies the storage activations: `exp` on scale, normalization on the
/// quaternion, `sigmoid` on opacity. Color passes through.
pub fn activate(attrs: &GaussianAttributes) -> Result<Activated> {
    let rotation = normalize_quaternion(&attrs.rotation)?;
    Ok(Activated {
        scale: Vector3::from(attrs.log_scale).map(f64::exp),
        rotation,
        opacity: sigmoid(attrs.opacity_logit),
        color: Vector3::from(attrs.color),
    })
}

/// `μ = p + Δμ`.
pub fn gaussian_center(attrs: &GaussianAttributes, grid_point: &Vector3<f64>) -> Vector3<f64> {
    grid_point + Vector3::from(attrs.offset)
}

/// Axis-aligned box, world units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::unit()
    }
}

impl Bounds {
    /// The `[-1, 1]³` cube objects are normalized into.
    pub fn unit() -> Self {
        Bounds {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }

    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(min[a].is_finite() && max[a].is_finite() && max[a] > min[a]) {
                return Err(Error::Config(format!(
                    "bounds axis {a} is empty or non-finite ({}, {})",
                    min[a], max[a]
                )));
            }
        }
        Ok(Bounds { min, max })
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianVolume {
    resolution: usize,
    bounds: Bounds,
    attributes: Vec<GaussianAttributes>,
    active: Vec<bool>,
}

impl GaussianVolume {
    /// A fully active volume with every Gaussian set to `fill`.
    pub fn filled(resolution: usize, bounds: Bounds, fill: GaussianAttributes) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Config(format!(
                "volume resolution must be at least 2, got {resolution}"
            )));
        }
        let len = resolution
            .checked_pow(3)
            .ok_or_else(|| Error::Config(format!("resolution {resolution} overflows")))?;
        Ok(GaussianVolume {
            resolution,
            bounds,
            attributes: vec![fill; len],
            active: vec![true; len],
        })
    }

    pub fn from_parts(
        resolution: usize,
        bounds: Bounds,
        attributes: Vec<GaussianAttributes>,
        active: Vec<bool>,
    ) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Config(format!(
                "volume resolution must be at least 2, got {resolution}"
            )));
        }
        let len = resolution * resolution * resolution;
        if attributes.len() != len || active.len() != len {
            return Err(Error::Shape(format!(
                "resolution {resolution} needs {len} records, got {} attributes and {} flags",
                attributes.len(),
                active.len()
            )));
        }
        Ok(GaussianVolume {
            resolution,
            bounds,
            attributes,
            active,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[GaussianAttributes] {
        &self.attributes
    }

    pub fn attributes_mut(&mut self) -> &mut [GaussianAttributes] {
        &mut self.attributes
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.active[index]
    }

    pub fn set_active(&mut self, index: usize, active: bool) {
        self.active[index] = active;
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.then_some(i))
    }

    /// Lattice spacing per axis, `extent / (N - 1)`.
    pub fn spacing(&self) -> Vector3<f64> {
        self.bounds.extent() / (self.resolution - 1) as f64
    }

    pub fn index_of(&self, coords: [usize; 3]) -> usize {
        let n = self.resolution;
        (coords[0] * n + coords[1]) * n + coords[2]
    }

    pub fn coords_of(&self, index: usize) -> [usize; 3] {
        let n = self.resolution;
        [index / (n * n), (index / n) % n, index % n]
    }

    /// World position of the lattice point at `index`.
    pub fn grid_position(&self, index: usize) -> Result<Vector3<f64>> {
        if index >= self.len() {
            return Err(Error::Range {
                index,
                len: self.len(),
            });
        }
        Ok(self.grid_position_unchecked(index))
    }

    pub(crate) fn grid_position_unchecked(&self, index: usize) -> Vector3<f64> {
        let c = self.coords_of(index);
        let h = self.spacing();
        Vector3::new(
            self.bounds.min[0] + c[0] as f64 * h.x,
            self.bounds.min[1] + c[1] as f64 * h.y,
            self.bounds.min[2] + c[2] as f64 * h.z,
        )
    }

    /// Current Gaussian center of point `index`.
    pub fn center(&self, index: usize) -> Vector3<f64> {
        gaussian_center(&self.attributes[index], &self.grid_position_unchecked(index))
    }

    /// Checks that every stored channel is finite and every quaternion normalizable.
    pub fn validate(&self) -> Result<()> {
        for (index, a) in self.attributes.iter().enumerate() {
            if let Some(channel) = a.first_non_finite() {
                return Err(Error::Render { index, channel });
            }
            if a.rotation.iter().all(|v| *v == 0.0) {
                return Err(Error::Render {
                    index,
                    channel: "rotation",
                });
            }
        }
        Ok(())
    }
}

/// Grid indices currently parked outside rendering and optimization.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidatePool {
    deactivated: BTreeSet<usize>,
}

impl CandidatePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// The pool implied by a volume's inactive points.
    pub fn from_volume(volume: &GaussianVolume) -> Self {
        CandidatePool {
            deactivated: volume
                .active_mask()
                .iter()
                .enumerate()
                .filter_map(|(i, a)| (!a).then_some(i))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.deactivated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deactivated.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.deactivated.contains(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.deactivated.iter().copied()
    }

    pub(crate) fn insert(&mut self, index: usize) -> bool {
        self.deactivated.insert(index)
    }

    pub(crate) fn remove(&mut self, index: usize) -> bool {
        self.deactivated.remove(&index)
    }

    pub(crate) fn drain(&mut self) -> Vec<usize> {
        std::mem::take(&mut self.deactivated).into_iter().collect()
    }

    /// True when the pool is exactly the set of inactive points of `volume`.
    pub fn is_consistent_with(&self, volume: &GaussianVolume) -> bool {
        self.len() + volume.active_count() == volume.len()
            && self.iter().all(|i| i < volume.len() && !volume.is_active(i))
    }
}

/// Pinhole camera; the camera looks down `+z`, `x` right, `y` down in the image.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Camera {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera has an empty image plane".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside a {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if !(err <= 1e-6) {
            return Err(Error::Config(format!(
                "camera rotation is not orthonormal (max |RᵀR - I| = {err:e})"
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("camera translation is not finite".into()));
        }
        Ok(())
    }

    /// Camera placed at `eye`, looking at `target`, horizontal field of view `fov_x` radians.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        width: usize,
        height: usize,
        fov_x: f64,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Config("look_at eye coincides with target".into()))?;
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            // up is parallel to the viewing direction; pick any perpendicular axis
            let alt = if forward.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let fx = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Camera::new(
            width,
            height,
            fx,
            fx,
            0.5 * width as f64,
            0.5 * height as f64,
            rotation,
            translation,
        )
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit optical axis in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }
}

/// Linear RGB image plus the per-pixel final transmittance.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// Row-major, 3 values per pixel.
    pub rgb: Vec<f64>,
    pub transmittance: Vec<f64>,
}

impl ImageBuffer {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            rgb.extend_from_slice(&color);
        }
        ImageBuffer {
            width,
            height,
            rgb,
            transmittance: vec![1.0; width * height],
        }
    }

    /// Wraps plain RGB data; transmittance is set to zero (fully opaque observation).
    pub fn from_rgb(width: usize, height: usize, rgb: Vec<f64>) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{}x{} image needs {} values, got {}",
                width,
                height,
                width * height * 3,
                rgb.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            rgb,
            transmittance: vec![0.0; width * height],
        })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let o = (y * self.width + x) * 3;
        [self.rgb[o], self.rgb[o + 1], self.rgb[o + 2]]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }
}
