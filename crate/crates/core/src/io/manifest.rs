//! `transforms.json` datasets in the NeRF-synthetic dialect.
//!
//! Poses are camera-to-world matrices in the OpenGL camera convention (camera
//! looks down `-z`, `y` up). The renderer's cameras look down `+z` with `y`
//! pointing down the image, so the `y` and `z` basis columns are negated on
//! the way in and out. Intrinsics come from `camera_angle_x` (and
//! `camera_angle_y` when present) with the principal point at the image
//! center; per-frame `fl_x`, `fl_y`, `cx`, `cy`, `w`, `h` override them.
//! Extra top-level keys `background` and `bounds` are understood.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PosedView};
use crate::error::{Error, Result};
use crate::model::{Bounds, Camera};

use super::image::{read_png, write_png};

pub const MANIFEST_NAME: &str = "transforms.json";

/// Largest tolerated deviation of a pose rotation from orthonormality.
const ORTHONORMAL_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub file_path: String,
    pub transform_matrix: [[f64; 4]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub camera_angle_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_angle_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsRecord>,
    pub frames: Vec<FrameRecord>,
}

/// Flip between the OpenGL and the renderer camera conventions (an involution).
fn flip_yz() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
}

/// Camera-to-world matrix (OpenGL convention) of a renderer camera.
pub fn camera_to_world(cam: &Camera) -> Matrix4<f64> {
    let r_c2w = cam.rotation.transpose() * flip_yz();
    let pos = cam.position();
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_c2w);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&pos);
    m
}

/// Renderer camera from an OpenGL camera-to-world matrix and intrinsics.
#[allow(clippy::too_many_arguments)]
pub fn camera_from_c2w(
    c2w: &Matrix4<f64>,
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
) -> Result<Camera> {
    let r_c2w = c2w.fixed_view::<3, 3>(0, 0).into_owned() * flip_yz();
    let pos: Vector3<f64> = c2w.fixed_view::<3, 1>(0, 3).into_owned();
    let mut rotation = r_c2w.transpose();
    let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
    if err > ORTHONORMAL_TOL {
        return Err(Error::Config(format!("pose rotation deviates from orthonormal by {err:e}")));
    }
    if err > 1e-10 {
        // snap to the nearest rotation
        let svd = rotation.svd(true, true);
        rotation = svd.u.expect("requested") * svd.v_t.expect("requested");
    }
    let translation = -(rotation * pos);
    Camera::new(width, height, fx, fy, cx, cy, rotation, translation)
}

fn image_path(root: &Path, file_path: &str) -> PathBuf {
    let rel = Path::new(file_path);
    let mut p = root.join(rel);
    if rel.extension().is_none() {
        p.set_extension("png");
    }
    p
}

/// Writes `transforms.json` and one PNG per view under `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    dataset.validate()?;
    std::fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
    let first = &dataset.views[0].camera;
    let mut frames = Vec::with_capacity(dataset.len());
    for view in &dataset.views {
        let rel = format!("./images/{}", view.name);
        write_png(&image_path(dir, &rel), &view.image)?;
        let m = camera_to_world(&view.camera);
        let c = &view.camera;
        frames.push(FrameRecord {
            file_path: rel,
            transform_matrix: std::array::from_fn(|r| std::array::from_fn(|k| m[(r, k)])),
            fl_x: Some(c.fx),
            fl_y: Some(c.fy),
            cx: Some(c.cx),
            cy: Some(c.cy),
            w: Some(c.width),
            h: Some(c.height),
        });
    }
    let manifest = DatasetManifest {
        camera_angle_x: 2.0 * (0.5 * first.width as f64 / first.fx).atan(),
        camera_angle_y: Some(2.0 * (0.5 * first.height as f64 / first.fy).atan()),
        background: Some(dataset.background),
        bounds: Some(BoundsRecord {
            min: dataset.bounds.min,
            max: dataset.bounds.max,
        }),
        frames,
    };
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::parse(&path, "manifest", e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads the manifest only; `path` may be the file or its directory.
pub fn read_manifest(path: &Path) -> Result<(PathBuf, DatasetManifest)> {
    let file = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| {
        let field = e.to_string();
        Error::parse(&file, "manifest", field)
    })?;
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((root, manifest))
}

/// Loads a dataset directory (or manifest path) with all of its images.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (root, manifest) = read_manifest(path)?;
    let file = root.join(MANIFEST_NAME);
    if manifest.frames.is_empty() {
        return Err(Error::Config(format!("{}: manifest has no frames", file.display())));
    }
    if !(manifest.camera_angle_x > 0.0 && manifest.camera_angle_x < std::f64::consts::PI) {
        return Err(Error::parse(&file, "camera_angle_x", "must lie in (0, π)"));
    }
    let bounds = match &manifest.bounds {
        Some(b) => Bounds::new(b.min, b.max).map_err(|e| Error::parse(&file, "bounds", e.to_string()))?,
        None => Bounds::unit(),
    };
    let mut views = Vec::with_capacity(manifest.frames.len());
    for (i, frame) in manifest.frames.iter().enumerate() {
        let img_path = image_path(&root, &frame.file_path);
        if !img_path.exists() {
            return Err(Error::parse(
                &img_path,
                format!("frames[{i}].file_path"),
                "image not found",
            ));
        }
        let image = read_png(&img_path)?;
        let (w, h) = (frame.w.unwrap_or(image.width), frame.h.unwrap_or(image.height));
        if (w, h) != (image.width, image.height) {
            return Err(Error::parse(
                &img_path,
                format!("frames[{i}].w/h"),
                format!("declared {w}x{h}, image is {}x{}", image.width, image.height),
            ));
        }
        let fx = frame
            .fl_x
            .unwrap_or(0.5 * w as f64 / (0.5 * manifest.camera_angle_x).tan());
        let fy = frame.fl_y.unwrap_or_else(|| match manifest.camera_angle_y {
            Some(ay) => 0.5 * h as f64 / (0.5 * ay).tan(),
            None => fx,
        });
        let cx = frame.cx.unwrap_or(0.5 * w as f64);
        let cy = frame.cy.unwrap_or(0.5 * h as f64);
        let c2w = Matrix4::from_fn(|r, k| frame.transform_matrix[r][k]);
        let camera = camera_from_c2w(&c2w, w, h, fx, fy, cx, cy)
            .map_err(|e| Error::parse(&file, format!("frames[{i}].transform_matrix"), e.to_string()))?;
        let name = Path::new(&frame.file_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("frame_{i}"));
        views.push(PosedView { name, camera, image });
    }
    Ok(Dataset {
        views,
        background: manifest.background.unwrap_or([1.0; 3]),
        bounds,
    })
}
