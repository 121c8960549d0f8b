//! C ABI over the `gaussvol` toolkit.
//!
//! Volumes and distance fields cross the boundary as opaque handles owned by
//! the caller, who releases them with the matching `*_free` function. Every
//! fallible call returns a [`GvStatus`]; on failure a description of the most
//! recent error on the calling thread is available from
//! [`gv_last_error_message`]. Panics never unwind into C.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use gaussvol::gdf::{extract_gdf, GdfVolume};
use gaussvol::io::config::{load_run_config, RunConfig};
use gaussvol::io::{export_ply, load_dataset, load_volume, save_gdf, save_volume};
use gaussvol::model::{Bounds, Camera, GaussianVolume};
use gaussvol::render::render;
use gaussvol::Error;
use nalgebra::{Matrix3, Vector3};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Render = 6,
    Numeric = 7,
    EmptyGeometry = 8,
    Panic = 9,
}

/// Opaque Gaussian volume.
pub struct GvVolume(GaussianVolume);

/// Opaque distance field.
pub struct GvGdf(GdfVolume);

/// Pinhole camera: world-to-camera rotation (row-major) and translation.
/// The camera looks down `+z` with `y` pointing down the image.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GvCamera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).expect("nul bytes removed"));
}

fn status_of(err: &Error) -> GvStatus {
    match err {
        Error::Io { .. } => GvStatus::Io,
        Error::Parse { .. } | Error::BadMagic { .. } | Error::VersionMismatch { .. } | Error::Truncated { .. } => {
            GvStatus::Format
        }
        Error::Config(_) => GvStatus::Config,
        Error::Render { .. } | Error::DegenerateRotation | Error::State(_) => GvStatus::Render,
        Error::Optimizer { .. } | Error::NonFiniteLoss { .. } => GvStatus::Numeric,
        Error::EmptyGeometry { .. } => GvStatus::EmptyGeometry,
        Error::Range { .. } | Error::Shape(_) | Error::Contract(_) => GvStatus::InvalidArgument,
    }
}

/// Runs `body`, recording any error or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), (GvStatus, String)>) -> GvStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GvStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GvStatus::Panic
        }
    }
}

fn lift<T>(r: gaussvol::Result<T>) -> Result<T, (GvStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (GvStatus, String) {
    (GvStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (GvStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GvStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (GvStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (GvStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fresh volume at resolution `n` over `bounds` (`min.xyz`, `max.xyz`) with
/// the fitting initialization. `bounds` may be null for the unit cube.
#[no_mangle]
pub unsafe extern "C" fn gv_volume_init(n: u32, bounds: *const f64, out: *mut *mut GvVolume) -> GvStatus {
    guard(|| {
        let b = if bounds.is_null() {
            Bounds::unit()
        } else {
            let s = std::slice::from_raw_parts(bounds, 6);
            lift(Bounds::new([s[0], s[1], s[2]], [s[3], s[4], s[5]]))?
        };
        let (v, _) = lift(gaussvol::fit::initialize(n as usize, b))?;
        write_out(out, Box::into_raw(Box::new(GvVolume(v))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gv_volume_load(path: *const c_char, out: *mut *mut GvVolume) -> GvStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        let v = lift(load_volume(&p))?;
        write_out(out, Box::into_raw(Box::new(GvVolume(v))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gv_volume_save(volume: *const GvVolume, path: *const c_char) -> GvStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        let p = path_arg(path, "path")?;
        lift(save_volume(&v.0, &p))
    })
}

/// Releases a volume; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gv_volume_free(volume: *mut GvVolume) {
    if !volume.is_null() {
        drop(Box::from_raw(volume));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gv_volume_resolution(volume: *const GvVolume, out: *mut u32) -> GvStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        write_out(out, v.0.resolution() as u32, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gv_volume_active_count(volume: *const GvVolume, out: *mut usize) -> GvStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        write_out(out, v.0.active_count(), "out")
    })
}

/// Camera at `eye` looking at `target`; `up` picks the image's upward
/// direction. `fov_x` is the horizontal field of view in radians.
#[no_mangle]
pub unsafe extern "C" fn gv_camera_look_at(
    eye: *const f64,
    target: *const f64,
    up: *const f64,
    width: u32,
    height: u32,
    fov_x: f64,
    out: *mut GvCamera,
) -> GvStatus {
    guard(|| {
        if eye.is_null() || target.is_null() || up.is_null() {
            return Err(null("eye/target/up"));
        }
        let v3 = |p: *const f64| Vector3::from_column_slice(std::slice::from_raw_parts(p, 3));
        let cam = lift(Camera::look_at(
            v3(eye),
            v3(target),
            v3(up),
            width as usize,
            height as usize,
            fov_x,
        ))?;
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = cam.rotation[(r, c)];
            }
        }
        let g = GvCamera {
            width,
            height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation,
            translation: cam.translation.into(),
        };
        write_out(out, g, "out")
    })
}

fn camera_from(c: &GvCamera) -> gaussvol::Result<Camera> {
    Camera::new(
        c.width as usize,
        c.height as usize,
        c.fx,
        c.fy,
        c.cx,
        c.cy,
        Matrix3::from_row_slice(&c.rotation),
        Vector3::from(c.translation),
    )
}

/// Renders into `rgb`, which must hold `width * height * 3` floats in
/// row-major interleaved order (linear color). `background` may be null for
/// white.
#[no_mangle]
pub unsafe extern "C" fn gv_volume_render(
    volume: *const GvVolume,
    camera: *const GvCamera,
    background: *const f64,
    rgb: *mut f32,
    rgb_len: usize,
) -> GvStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        let c = deref(camera, "camera")?;
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        let need = c.width as usize * c.height as usize * 3;
        if rgb_len != need {
            return Err((
                GvStatus::InvalidArgument,
                format!("rgb buffer holds {rgb_len} floats, image needs {need}"),
            ));
        }
        let bg = if background.is_null() {
            [1.0; 3]
        } else {
            let s = std::slice::from_raw_parts(background, 3);
            [s[0], s[1], s[2]]
        };
        let cam = lift(camera_from(c))?;
        let image = lift(render(&v.0, &cam, bg))?;
        let dst = std::slice::from_raw_parts_mut(rgb, need);
        for (d, s) in dst.iter_mut().zip(&image.rgb) {
            *d = *s as f32;
        }
        Ok(())
    })
}

/// Fits a volume to the dataset at `dataset` (directory or transforms.json).
/// `config` is a TOML file path or null for defaults.
#[no_mangle]
pub unsafe extern "C" fn gv_fit(dataset: *const c_char, config: *const c_char, out: *mut *mut GvVolume) -> GvStatus {
    guard(|| {
        let d = path_arg(dataset, "dataset")?;
        let cfg = if config.is_null() {
            RunConfig::default()
        } else {
            lift(load_run_config(&path_arg(config, "config")?))?
        };
        let data = lift(load_dataset(&d))?;
        let outcome = lift(gaussvol::fit::fit(&data, &cfg.fit, &cfg.loss))?;
        write_out(out, Box::into_raw(Box::new(GvVolume(outcome.volume))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn gv_volume_export_ply(
    volume: *const GvVolume,
    path: *const c_char,
    opacity_floor: f64,
) -> GvStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        let p = path_arg(path, "path")?;
        lift(export_ply(&v.0, &p, opacity_floor))
    })
}

#[no_mangle]
pub unsafe extern "C" fn gv_gdf_extract(volume: *const GvVolume, opacity_floor: f64, out: *mut *mut GvGdf) -> GvStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        let g = lift(extract_gdf(&v.0, opacity_floor))?;
        write_out(out, Box::into_raw(Box::new(GvGdf(g))), "out")
    })
}

/// Number of lattice values in a distance field.
#[no_mangle]
pub unsafe extern "C" fn gv_gdf_len(gdf: *const GvGdf, out: *mut usize) -> GvStatus {
    guard(|| {
        let g = deref(gdf, "gdf")?;
        write_out(out, g.0.len(), "out")
    })
}

/// Copies the distance values (lattice order, `z` fastest) into `values`.
#[no_mangle]
pub unsafe extern "C" fn gv_gdf_values(gdf: *const GvGdf, values: *mut f64, len: usize) -> GvStatus {
    guard(|| {
        let g = deref(gdf, "gdf")?;
        if values.is_null() {
            return Err(null("values"));
        }
        if len != g.0.len() {
            return Err((
                GvStatus::InvalidArgument,
                format!("buffer holds {len} values, field has {}", g.0.len()),
            ));
        }
        std::slice::from_raw_parts_mut(values, len).copy_from_slice(&g.0.values);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gv_gdf_save(gdf: *const GvGdf, path: *const c_char) -> GvStatus {
    guard(|| {
        let g = deref(gdf, "gdf")?;
        let p = path_arg(path, "path")?;
        lift(save_gdf(&g.0, &p))
    })
}

/// Releases a distance field; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gv_gdf_free(gdf: *mut GvGdf) {
    if !gdf.is_null() {
        drop(Box::from_raw(gdf));
    }
}
