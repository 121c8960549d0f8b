//! Binary PLY export in the layout common splat viewers read.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{sigmoid, GaussianVolume};

/// Zeroth-order spherical harmonic basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

pub const PLY_PROPERTIES: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

/// Indices of active Gaussians whose opacity reaches `opacity_floor`.
pub fn exported_indices(volume: &GaussianVolume, opacity_floor: f64) -> Vec<usize> {
    volume
        .active_indices()
        .filter(|&i| sigmoid(volume.attributes()[i].opacity_logit) >= opacity_floor)
        .collect()
}

pub fn ply_bytes(volume: &GaussianVolume, opacity_floor: f64) -> Vec<u8> {
    let keep = exported_indices(volume, opacity_floor);
    let mut out = Vec::with_capacity(512 + keep.len() * PLY_PROPERTIES.len() * 4);
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", keep.len()).as_bytes());
    for p in PLY_PROPERTIES {
        out.extend_from_slice(format!("property float {p}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for i in keep {
        let a = &volume.attributes()[i];
        let c = volume.center(i);
        let row = [
            c.x,
            c.y,
            c.z,
            (a.color[0] - 0.5) / SH_C0,
            (a.color[1] - 0.5) / SH_C0,
            (a.color[2] - 0.5) / SH_C0,
            a.opacity_logit,
            a.log_scale[0],
            a.log_scale[1],
            a.log_scale[2],
            a.rotation[0],
            a.rotation[1],
            a.rotation[2],
            a.rotation[3],
        ];
        for v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn export_ply(volume: &GaussianVolume, path: &Path, opacity_floor: f64) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&ply_bytes(volume, opacity_floor))
        .map_err(|e| Error::io(path, e))
}
