//! Candidate-pool bookkeeping observer and the small fit it runs on.

use gaussvol::dataset::Dataset;
use gaussvol::fit::{FitConfig, FitObserver, IterationMetrics, RefinementEvent, RefinementKind};
use gaussvol::model::{CandidatePool, GaussianVolume};
use gaussvol::render::GradientBuffer;
use gaussvol::scene::{make_scene, render_dataset, SceneSpec, ViewSpec};

/// Checks pool bookkeeping at every hook of a fit.
#[derive(Default)]
pub struct Bookkeeper {
    pub iterations: usize,
    pub exchanges: usize,
    pub activations: usize,
    pub prunes: usize,
    pub releases: usize,
    pub violations: Vec<String>,
}

impl Bookkeeper {
    fn check_partition(&mut self, at: &str, volume: &GaussianVolume, pool: &CandidatePool) {
        if volume.active_count() + pool.len() != volume.len() {
            self.violations.push(format!(
                "{at}: active {} + pool {} != {}",
                volume.active_count(),
                pool.len(),
                volume.len()
            ));
        }
        // exhaustive: every grid point is in exactly one of the two sets
        for i in 0..volume.len() {
            if volume.is_active(i) == pool.contains(i) {
                self.violations.push(format!("{at}: point {i} active={}", volume.is_active(i)));
            }
        }
    }
}

impl FitObserver for Bookkeeper {
    fn on_iteration(&mut self, m: &IterationMetrics, grads: &GradientBuffer, volume: &GaussianVolume, pool: &CandidatePool) {
        self.iterations += 1;
        self.check_partition(&format!("iteration {}", m.iteration), volume, pool);
        for i in pool.iter() {
            if !grads.grads[i].is_zero() || grads.viewspace_grad_norm[i] != 0.0 {
                self.violations.push(format!("iteration {}: pooled point {i} has a gradient", m.iteration));
            }
        }
        if m.active_count + m.pool_size != volume.len() {
            self.violations.push(format!("iteration {}: metrics disagree", m.iteration));
        }
    }

    fn on_refinement(&mut self, e: &RefinementEvent, volume: &GaussianVolume, pool: &CandidatePool) {
        self.check_partition(&format!("refinement at {}", e.iteration), volume, pool);
        match &e.kind {
            RefinementKind::Exchange(o) => {
                self.exchanges += 1;
                self.prunes += o.pruned.len();
                self.activations += o.activated.len();
            }
            RefinementKind::Release(_) => {
                self.releases += 1;
                if !pool.is_empty() || volume.active_count() != volume.len() {
                    self.violations.push("pool not empty after release".into());
                }
            }
        }
    }
}

pub fn small_dataset() -> Dataset {
    let scene = make_scene(&SceneSpec {
        gaussian_count: 25,
        scale_range: [0.08, 0.2],
        ..SceneSpec::default()
    })
    .unwrap();
    render_dataset(&scene, &ViewSpec::new(12, 2.6, 24)).unwrap()
}

pub fn cps_config(seed: u64) -> FitConfig {
    FitConfig {
        resolution: 4,
        iterations: 240,
        refine_interval: 10,
        refine_start: Some(20),
        refine_end: Some(200),
        tau_prune: 0.08,
        tau_densify: 1e-5,
        lr_opacity: 0.1,
        // two spacings, so the run exercises reactivation
        epsilon_pool: Some(4.0 / 3.0),
        seed,
        ..FitConfig::default()
    }
}
