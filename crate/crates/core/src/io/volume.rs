//! GVOL volume files and GGDF distance-field files.
//!
//! Both share a 36-byte little-endian header:
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..4   | magic, `GVOL` or `GGDF`                   |
//! | 4..8   | format version, `u32`                     |
//! | 8..12  | lattice resolution `N`, `u32`             |
//! | 12..36 | bounds `min.xyz`, `max.xyz` as six `f32`  |
//!
//! A GVOL body holds `N³` records of 14 `f32` channels (offset, log_scale,
//! rotation `w,x,y,z`, opacity_logit, color) followed by `N³` active-flag
//! bytes. A GGDF body holds `N³` `f32` distances. Records are in lattice
//! order with `z` fastest.
//!
//! Values are stored as `f32`; anything already representable in `f32`
//! survives a save/load roundtrip bit for bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gdf::GdfVolume;
use crate::model::{Bounds, GaussianAttributes, GaussianVolume, CHANNELS};

pub const VOLUME_MAGIC: &[u8; 4] = b"GVOL";
pub const GDF_MAGIC: &[u8; 4] = b"GGDF";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;

/// Size in bytes of a GVOL file at resolution `n`.
pub fn volume_file_len(n: usize) -> usize {
    let len = n * n * n;
    HEADER_LEN + len * CHANNELS * 4 + len
}

/// Size in bytes of a GGDF file at resolution `n`.
pub fn gdf_file_len(n: usize) -> usize {
    HEADER_LEN + n * n * n * 4
}

fn header(magic: &[u8; 4], n: usize, bounds: &Bounds, body: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in bounds.min.iter().chain(&bounds.max) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Validates the header and overall length; returns `(N, bounds)`.
fn parse_header(
    path: &Path,
    bytes: &[u8],
    magic: &[u8; 4],
    file_len: fn(usize) -> usize,
) -> Result<(usize, Bounds)> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = u32_at(bytes, 8) as usize;
    if !(2..=1024).contains(&n) {
        return Err(Error::parse(path, "resolution", format!("{n} outside 2..=1024")));
    }
    let expected = file_len(n);
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected,
        });
    }
    if bytes.len() > expected {
        return Err(Error::parse(
            path,
            "length",
            format!("{} trailing bytes", bytes.len() - expected),
        ));
    }
    let b: [f64; 6] = std::array::from_fn(|i| f32_at(bytes, 12 + 4 * i) as f64);
    let bounds = Bounds::new([b[0], b[1], b[2]], [b[3], b[4], b[5]])
        .map_err(|e| Error::parse(path, "bounds", e.to_string()))?;
    Ok((n, bounds))
}

pub fn volume_to_bytes(volume: &GaussianVolume) -> Vec<u8> {
    let n = volume.resolution();
    let mut out = header(VOLUME_MAGIC, n, volume.bounds(), volume_file_len(n) - HEADER_LEN);
    for a in volume.attributes() {
        for c in a.to_channels() {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    out.extend(volume.active_mask().iter().map(|&a| a as u8));
    out
}

pub fn volume_from_bytes(path: &Path, bytes: &[u8]) -> Result<GaussianVolume> {
    let (n, bounds) = parse_header(path, bytes, VOLUME_MAGIC, volume_file_len)?;
    let len = n * n * n;
    let record = CHANNELS * 4;
    let attributes: Vec<GaussianAttributes> = (0..len)
        .map(|i| {
            let base = HEADER_LEN + i * record;
            let ch: [f64; CHANNELS] = std::array::from_fn(|c| f32_at(bytes, base + 4 * c) as f64);
            GaussianAttributes::from_channels(&ch)
        })
        .collect();
    let flags = &bytes[HEADER_LEN + len * record..];
    let mut active = Vec::with_capacity(len);
    for (i, &f) in flags.iter().enumerate() {
        match f {
            0 => active.push(false),
            1 => active.push(true),
            other => {
                return Err(Error::parse(path, format!("active[{i}]"), format!("flag byte {other}")))
            }
        }
    }
    GaussianVolume::from_parts(n, bounds, attributes, active)
}

pub fn save_volume(volume: &GaussianVolume, path: &Path) -> Result<()> {
    std::fs::write(path, volume_to_bytes(volume)).map_err(|e| Error::io(path, e))
}

pub fn load_volume(path: &Path) -> Result<GaussianVolume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    volume_from_bytes(path, &bytes)
}

pub fn gdf_to_bytes(gdf: &GdfVolume) -> Vec<u8> {
    let n = gdf.resolution;
    let mut out = header(GDF_MAGIC, n, &gdf.bounds, gdf_file_len(n) - HEADER_LEN);
    for v in &gdf.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn gdf_from_bytes(path: &Path, bytes: &[u8]) -> Result<GdfVolume> {
    let (n, bounds) = parse_header(path, bytes, GDF_MAGIC, gdf_file_len)?;
    let values = (0..n * n * n)
        .map(|i| f32_at(bytes, HEADER_LEN + 4 * i) as f64)
        .collect();
    GdfVolume::new(n, bounds, values)
}

pub fn save_gdf(gdf: &GdfVolume, path: &Path) -> Result<()> {
    std::fs::write(path, gdf_to_bytes(gdf)).map_err(|e| Error::io(path, e))
}

pub fn load_gdf(path: &Path) -> Result<GdfVolume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    gdf_from_bytes(path, &bytes)
}
