//! Fixed-lattice 3D Gaussian volumes.
//!
//! A [`model::GaussianVolume`] holds exactly `N³` Gaussians anchored to a regular
//! lattice, each displaced by a bounded offset. The crate fits such volumes to
//! posed images ([`fit`]), renders them differentiably ([`render`]), extracts
//! their distance-field geometry ([`gdf`]) and exercises the diffusion
//! schedule used to generate that geometry ([`diffusion`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod fit;
pub mod gdf;
pub mod io;
pub mod model;
pub mod objective;
pub mod render;
pub mod scene;

pub use error::{Error, Result};
