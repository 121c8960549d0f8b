//! Persistence: datasets, volume and distance-field files, PLY export, configs.

pub mod config;
pub mod image;
pub mod manifest;
pub mod ply;
pub mod volume;

pub use config::{load_run_config, load_synthetic_spec, RunConfig, SyntheticSpec};
pub use image::{read_png, write_png};
pub use manifest::{load_dataset, write_dataset};
pub use ply::export_ply;
pub use volume::{load_gdf, load_volume, save_gdf, save_volume};
