//! Fitting a [`GaussianVolume`] to posed images.
//!
//! Each iteration renders one view, evaluates the fitting loss, backpropagates
//! through the rasterizer and takes an Adam step. On refinement iterations,
//! low-opacity points are parked in the [`CandidatePool`] and pooled lattice
//! points are recycled next to points with large view-space gradients. When
//! refinement ends the pool is released so every lattice point is active again.

mod adam;
mod cps;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use cps::{
    densify_select, pool_exchange, prune_select, release_pool, ExchangeOutcome, ExchangeParams,
};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{logit, Bounds, CandidatePool, ChannelGroup, GaussianAttributes, GaussianVolume};
use crate::objective::{fitting_loss, LossWeights};
use crate::render::{backward_from, forward, GradientBuffer, RenderOptions};

/// Opacity of freshly initialized points.
pub const INITIAL_OPACITY: f64 = 0.1;
/// Opacity of points reintroduced when the pool is released.
pub const RELEASE_OPACITY: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Lattice resolution `N`.
    pub resolution: usize,
    /// Total iterations `T`.
    pub iterations: usize,
    pub refine_interval: usize,
    /// First refinement iteration; `None` means `min(500, refine_end)`.
    pub refine_start: Option<usize>,
    /// Iteration at which the pool is released; `None` means `0.8 T`.
    pub refine_end: Option<usize>,
    /// Prune threshold on activated opacity.
    pub tau_prune: f64,
    /// Densify threshold on the mean view-space gradient norm (pixels).
    pub tau_densify: f64,
    /// Run prune/densify/release at all. Off is the plain-Adam ablation.
    pub candidate_pool: bool,
    /// Optimize `Δμ`. Off pins every center to its lattice point.
    pub optimize_offsets: bool,
    pub lr_offset: f64,
    pub lr_log_scale: f64,
    pub lr_rotation: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Pool search radius, world units; `None` means `epsilon_offsets`, so a
    /// clone can always land on the point it copies.
    pub epsilon_pool: Option<f64>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            resolution: 32,
            iterations: 3000,
            refine_interval: 100,
            refine_start: None,
            refine_end: None,
            tau_prune: 0.005,
            tau_densify: 1e-5,
            candidate_pool: true,
            optimize_offsets: true,
            lr_offset: 1e-3,
            lr_log_scale: 5e-3,
            lr_rotation: 1e-3,
            lr_opacity: 5e-2,
            lr_color: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-15,
            epsilon_pool: None,
            seed: 0,
        }
    }
}

/// Refinement window with defaults filled in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefineSchedule {
    pub start: usize,
    pub end: usize,
    pub interval: usize,
}

impl RefineSchedule {
    /// Whether the iteration that just completed (1-based) refines.
    pub fn refines_at(&self, completed: usize) -> bool {
        completed >= self.start && completed < self.end && completed.is_multiple_of(self.interval)
    }
}

impl FitConfig {
    pub fn learning_rate(&self, group: ChannelGroup) -> f64 {
        match group {
            ChannelGroup::Offset if !self.optimize_offsets => 0.0,
            ChannelGroup::Offset => self.lr_offset,
            ChannelGroup::LogScale => self.lr_log_scale,
            ChannelGroup::Rotation => self.lr_rotation,
            ChannelGroup::OpacityLogit => self.lr_opacity,
            ChannelGroup::Color => self.lr_color,
        }
    }

    pub fn schedule(&self) -> RefineSchedule {
        let end = self
            .refine_end
            .unwrap_or((self.iterations as f64 * 0.8).floor() as usize);
        let start = self.refine_start.unwrap_or(500.min(end));
        RefineSchedule {
            start,
            end,
            interval: self.refine_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Config(format!(
                "resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        let lrs = [
            ("lr_offset", self.lr_offset),
            ("lr_log_scale", self.lr_log_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_opacity", self.lr_opacity),
            ("lr_color", self.lr_color),
        ];
        for (name, lr) in lrs {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_epsilon >= 0.0) {
            return Err(Error::Config("adam_epsilon must be >= 0".into()));
        }
        if let Some(r) = self.epsilon_pool {
            if !(r > 0.0) {
                return Err(Error::Config(format!("epsilon_pool must be > 0, got {r}")));
            }
        }
        if self.candidate_pool && self.iterations > 0 {
            if !(self.tau_prune > 0.0 && self.tau_densify > 0.0) {
                return Err(Error::Config("prune and densify thresholds must be > 0".into()));
            }
            if self.refine_interval == 0 {
                return Err(Error::Config("refine_interval must be > 0".into()));
            }
            let s = self.schedule();
            if !(0 < s.start && s.start <= s.end && s.end <= self.iterations) {
                return Err(Error::Config(format!(
                    "refinement window must satisfy 0 < start <= end <= iterations, got {} / {} / {}",
                    s.start, s.end, self.iterations
                )));
            }
        }
        Ok(())
    }
}

/// Attributes every lattice point starts with.
pub fn initial_attributes(volume: &GaussianVolume) -> GaussianAttributes {
    let half_voxel = 0.5 * volume.spacing();
    GaussianAttributes {
        offset: [0.0; 3],
        log_scale: [half_voxel.x.ln(), half_voxel.y.ln(), half_voxel.z.ln()],
        rotation: [1.0, 0.0, 0.0, 0.0],
        opacity_logit: logit(INITIAL_OPACITY),
        color: [0.5; 3],
    }
}

/// A fully active volume with every center on its lattice point and an empty pool.
pub fn initialize(resolution: usize, bounds: Bounds) -> Result<(GaussianVolume, CandidatePool)> {
    let mut volume = GaussianVolume::filled(resolution, bounds, GaussianAttributes::default())?;
    let init = initial_attributes(&volume);
    volume.attributes_mut().fill(init);
    Ok((volume, CandidatePool::new()))
}

/// Per-iteration record of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub view: usize,
    pub loss: f64,
    pub psnr: f64,
    pub active_count: usize,
    pub pool_size: usize,
}

impl IterationMetrics {
    pub const HEADER: &'static str = "# iteration loss psnr active_count";

    /// One whitespace-separated log line.
    pub fn log_line(&self) -> String {
        format!(
            "{} {:.9e} {:.6} {}",
            self.iteration, self.loss, self.psnr, self.active_count
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RefinementKind {
    Exchange(ExchangeOutcome),
    Release(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementEvent {
    pub iteration: usize,
    pub kind: RefinementKind,
    pub active_count: usize,
    pub pool_size: usize,
}

/// Hooks into the fit loop; every method defaults to doing nothing.
pub trait FitObserver {
    /// After the optimizer step of an iteration.
    fn on_iteration(
        &mut self,
        _metrics: &IterationMetrics,
        _grads: &GradientBuffer,
        _volume: &GaussianVolume,
        _pool: &CandidatePool,
    ) {
    }

    /// After a prune/densify exchange or the final release.
    fn on_refinement(&mut self, _event: &RefinementEvent, _volume: &GaussianVolume, _pool: &CandidatePool) {}
}

impl FitObserver for () {}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub volume: GaussianVolume,
    pub metrics: Vec<IterationMetrics>,
    pub refinements: Vec<RefinementEvent>,
}

impl FitOutcome {
    /// Writes the line-oriented metrics log.
    pub fn write_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", IterationMetrics::HEADER)?;
        for m in &self.metrics {
            writeln!(out, "{}", m.log_line())?;
        }
        Ok(())
    }
}

pub fn fit(dataset: &Dataset, cfg: &FitConfig, weights: &LossWeights) -> Result<FitOutcome> {
    fit_with_observer(dataset, cfg, weights, &mut ())
}

pub fn fit_with_observer<O: FitObserver>(
    dataset: &Dataset,
    cfg: &FitConfig,
    weights: &LossWeights,
    observer: &mut O,
) -> Result<FitOutcome> {
    dataset.validate()?;
    cfg.validate()?;
    weights.validate()?;

    let (mut volume, mut pool) = initialize(cfg.resolution, dataset.bounds)?;
    let mut adam = AdamState::new(volume.len());
    let mut stats = GradientBuffer::zeros(volume.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let schedule = cfg.schedule();
    let epsilon_offsets = weights.epsilon_for(&volume);
    let exchange = ExchangeParams {
        epsilon_offsets,
        epsilon_pool: cfg.epsilon_pool.unwrap_or(epsilon_offsets),
        move_offsets: cfg.optimize_offsets,
    };

    let mut order: Vec<usize> = Vec::new();
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut refinements = Vec::new();
    let mut last_loss = f64::NAN;

    for iteration in 0..cfg.iterations {
        if order.is_empty() {
            order = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let view_index = order.pop().expect("refilled above");
        let view = &dataset.views[view_index];

        let options = RenderOptions::default();
        let pass = forward(&volume, &view.camera, dataset.background, &options)?;
        let loss = fitting_loss(&pass.image, &view.image, &volume, weights)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                active: volume.active_count(),
                last_loss,
            });
        }
        last_loss = loss.total;

        let mut grads = backward_from(&volume, &view.camera, &pass, &loss.image_grad, &options)?;
        for index in volume.active_indices() {
            let g = &mut grads.grads[index].offset;
            for (a, o) in g.iter_mut().zip(loss.offset_grad[index]) {
                *a += o;
            }
            if !cfg.optimize_offsets {
                *g = [0.0; 3];
            }
        }
        adam_step(&mut volume, &grads, &mut adam, cfg)?;
        stats.accumulate_viewspace(&grads);

        let record = IterationMetrics {
            iteration,
            view: view_index,
            loss: loss.total,
            psnr: loss.psnr,
            active_count: volume.active_count(),
            pool_size: pool.len(),
        };
        observer.on_iteration(&record, &grads, &volume, &pool);
        metrics.push(record);

        if !cfg.candidate_pool {
            continue;
        }
        let completed = iteration + 1;
        if schedule.refines_at(completed) {
            let pruned = prune_select(&volume, cfg.tau_prune);
            // densify among what survives the prune
            let densified: Vec<usize> = densify_select(&volume, &stats, cfg.tau_densify)
                .into_iter()
                .filter(|i| pruned.binary_search(i).is_err())
                .collect();
            let outcome = pool_exchange(&mut volume, &mut pool, &pruned, &densified, &exchange, &mut rng)?;
            for &(_, recycled) in &outcome.activated {
                adam.reset(recycled);
            }
            stats.reset_viewspace();
            let event = RefinementEvent {
                iteration,
                kind: RefinementKind::Exchange(outcome),
                active_count: volume.active_count(),
                pool_size: pool.len(),
            };
            observer.on_refinement(&event, &volume, &pool);
            refinements.push(event);
        }
        if completed == schedule.end {
            let released = release_pool(&mut volume, &mut pool);
            for &i in &released {
                adam.reset(i);
            }
            let event = RefinementEvent {
                iteration,
                kind: RefinementKind::Release(released),
                active_count: volume.active_count(),
                pool_size: pool.len(),
            };
            observer.on_refinement(&event, &volume, &pool);
            refinements.push(event);
        }
    }

    Ok(FitOutcome {
        volume,
        metrics,
        refinements,
    })
}
