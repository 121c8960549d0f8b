//! Command-line interface.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix4, Vector3};

use crate::diffusion::{build_schedule, normalize_gdf, sample_lattice, OracleDenoiser, ZeroDenoiser};
use crate::error::{Error, Result};
use crate::fit::fit;
use crate::gdf::{extract_gdf, gdf_oracle, DEFAULT_OPACITY_FLOOR};
use crate::io::config::{load_run_config, load_synthetic_spec, RunConfig, SyntheticSpec};
use crate::io::manifest::camera_from_c2w;
use crate::io::{export_ply, load_dataset, load_gdf, load_volume, save_gdf, save_volume, write_dataset, write_png};
use crate::model::Camera;
use crate::objective::image_terms;
use crate::render::render;
use crate::scene::{make_scene, render_dataset, SceneSpec};

#[derive(Debug, Parser)]
#[command(name = "gaussvol", version, about = "Fit, render and analyze fixed-lattice Gaussian volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a volume to a posed image dataset.
    Fit(FitArgs),
    /// Render a volume from one pose to a PNG.
    Render(RenderArgs),
    /// Extract the distance field of a volume.
    ExtractGdf(ExtractArgs),
    /// Write a volume as a binary splat PLY.
    ExportPly(ExportArgs),
    /// Print per-view PSNR/SSIM of a volume against a dataset.
    Metrics(MetricsArgs),
    /// Build a synthetic scene with train and eval datasets.
    MakeSynthetic(SyntheticArgs),
    /// Run the reverse diffusion sampler on a small distance field.
    DiffusionDemo(DiffusionArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory or transforms.json path.
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with `[fit]` and `[loss]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Disable the candidate pool (no prune, densify or release).
    #[arg(long)]
    pub no_cps: bool,
    /// Pin every Gaussian center to its lattice point.
    #[arg(long)]
    pub no_offsets: bool,
    /// Write the per-iteration metrics log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub volume: PathBuf,
    /// `azimuth,elevation,radius` (degrees, degrees, world units) looking at
    /// the origin, or 16 comma-separated values of a camera-to-world matrix
    /// in row-major order (camera looks down -z, y up).
    #[arg(long, allow_hyphen_values = true)]
    pub pose: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long)]
    pub height: Option<usize>,
    /// Horizontal field of view in degrees.
    #[arg(long, default_value_t = 50.0)]
    pub fov: f64,
    /// `r,g,b` in [0, 1].
    #[arg(long, default_value = "1,1,1")]
    pub background: String,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub volume: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OPACITY_FLOOR)]
    pub opacity_floor: f64,
    /// Also run the exhaustive reference and require identical output.
    #[arg(long, hide = true)]
    pub verify_oracle: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub volume: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OPACITY_FLOOR)]
    pub opacity_floor: f64,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub volume: PathBuf,
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    /// TOML file with `[scene]`, `[train]` and `[eval]` tables; omitted
    /// tables use the defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiffusionArgs {
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub resolution: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub beta_start: f64,
    #[arg(long, default_value_t = 2e-2)]
    pub beta_end: f64,
    /// Write the sampled distance field here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command, returning the text to print on success.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Render(a) => run_render(a),
        Command::ExtractGdf(a) => run_extract(a),
        Command::ExportPly(a) => {
            let volume = load_volume(&a.volume)?;
            export_ply(&volume, &a.out, a.opacity_floor)?;
            Ok(format!("wrote {}\n", a.out.display()))
        }
        Command::Metrics(a) => run_metrics(a),
        Command::MakeSynthetic(a) => run_synthetic(a),
        Command::DiffusionDemo(a) => run_diffusion(a),
    }
}

fn run_fit(a: FitArgs) -> Result<String> {
    let mut cfg = match &a.config {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    };
    if a.no_cps {
        cfg.fit.candidate_pool = false;
    }
    if a.no_offsets {
        cfg.fit.optimize_offsets = false;
    }
    if let Some(s) = a.seed {
        cfg.fit.seed = s;
    }
    if let Some(t) = a.iterations {
        cfg.fit.iterations = t;
    }
    if let Some(n) = a.resolution {
        cfg.fit.resolution = n;
    }
    let dataset = load_dataset(&a.dataset)?;
    let outcome = fit(&dataset, &cfg.fit, &cfg.loss)?;
    save_volume(&outcome.volume, &a.out)?;
    if let Some(log) = &a.log {
        let file = std::fs::File::create(log).map_err(|e| Error::io(log, e))?;
        outcome
            .write_log(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(log, e))?;
    }
    let last = outcome.metrics.last();
    Ok(format!(
        "fit {} iterations, {} active gaussians, final loss {:.6}, wrote {}\n",
        outcome.metrics.len(),
        outcome.volume.active_count(),
        last.map_or(f64::NAN, |m| m.loss),
        a.out.display()
    ))
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: `{s}` is not a number")))
        })
        .collect()
}

/// Camera from a `--pose` argument.
pub fn parse_pose(pose: &str, width: usize, height: usize, fov_deg: f64) -> Result<Camera> {
    let v = parse_floats(pose, "--pose")?;
    let fx = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
    match v.len() {
        3 => {
            let (az, el, r) = (v[0].to_radians(), v[1].to_radians(), v[2]);
            let eye = Vector3::new(r * el.cos() * az.cos(), r * el.sin(), r * el.cos() * az.sin());
            let up = if el.cos().abs() < 1e-6 { Vector3::z() } else { Vector3::y() };
            Camera::look_at(eye, Vector3::zeros(), up, width, height, fov_deg.to_radians())
        }
        16 => {
            let m = Matrix4::from_row_slice(&v);
            camera_from_c2w(&m, width, height, fx, fx, 0.5 * width as f64, 0.5 * height as f64)
        }
        n => Err(Error::Config(format!(
            "--pose takes 3 values (az,el,radius) or 16 (camera-to-world), got {n}"
        ))),
    }
}

fn run_render(a: RenderArgs) -> Result<String> {
    let volume = load_volume(&a.volume)?;
    let bg = parse_floats(&a.background, "--background")?;
    let bg: [f64; 3] = bg
        .try_into()
        .map_err(|_| Error::Config("--background takes three values".into()))?;
    let cam = parse_pose(&a.pose, a.width, a.height.unwrap_or(a.width), a.fov)?;
    let image = render(&volume, &cam, bg)?;
    write_png(&a.out, &image)?;
    Ok(format!("wrote {}\n", a.out.display()))
}

fn run_extract(a: ExtractArgs) -> Result<String> {
    let volume = load_volume(&a.volume)?;
    let gdf = extract_gdf(&volume, a.opacity_floor)?;
    let mut msg = String::new();
    if a.verify_oracle {
        let reference = gdf_oracle(&volume, a.opacity_floor)?;
        let diff = gdf.max_abs_diff(&reference);
        if gdf != reference {
            return Err(Error::Contract(format!(
                "distance field differs from the exhaustive reference by {diff:e}"
            )));
        }
        msg.push_str("oracle check passed\n");
    }
    save_gdf(&gdf, &a.out)?;
    let _ = writeln!(msg, "wrote {}", a.out.display());
    Ok(msg)
}

fn format_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p:.3}")
    }
}

fn run_metrics(a: MetricsArgs) -> Result<String> {
    let volume = load_volume(&a.volume)?;
    let dataset = load_dataset(&a.dataset)?;
    let mut out = String::from("view psnr ssim\n");
    let (mut psnr_sum, mut ssim_sum) = (0.0, 0.0);
    for view in &dataset.views {
        let image = render(&volume, &view.camera, dataset.background)?;
        let t = image_terms(&image, &view.image)?;
        psnr_sum += t.psnr;
        ssim_sum += t.ssim;
        let _ = writeln!(out, "{} {} {:.5}", view.name, format_psnr(t.psnr), t.ssim);
    }
    let n = dataset.len() as f64;
    let _ = writeln!(out, "mean {} {:.5}", format_psnr(psnr_sum / n), ssim_sum / n);
    Ok(out)
}

fn run_synthetic(a: SyntheticArgs) -> Result<String> {
    let spec = match &a.spec {
        Some(p) => load_synthetic_spec(p)?,
        None => SyntheticSpec::default(),
    };
    let scene = make_scene(&spec.scene)?;
    let out: &Path = &a.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_dataset(&out.join("train"), &render_dataset(&scene, &spec.train)?)?;
    write_dataset(&out.join("eval"), &render_dataset(&scene, &spec.eval)?)?;
    save_volume(&scene, &out.join("scene.gvol"))?;
    Ok(format!(
        "wrote {} train and {} eval views to {}\n",
        spec.train.count,
        spec.eval.count,
        out.display()
    ))
}

fn run_diffusion(a: DiffusionArgs) -> Result<String> {
    let schedule = build_schedule(a.steps, a.beta_start, a.beta_end)?;
    let scene = make_scene(&SceneSpec {
        seed: a.seed,
        resolution: Some(a.resolution),
        gaussian_count: a.resolution.pow(3).min(40),
        ..SceneSpec::default()
    })?;
    let gdf = extract_gdf(&scene, DEFAULT_OPACITY_FLOOR)?;
    let x0 = normalize_gdf(&gdf);
    let oracle = OracleDenoiser {
        x0: x0.clone(),
        schedule: &schedule,
    };
    let linf = |x: &[f64]| x.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let recovered = sample_lattice(&oracle, x0.len(), &[], &schedule, a.seed)?;
    let zero = sample_lattice(&ZeroDenoiser, x0.len(), &[], &schedule, a.seed)?;
    let mut out = String::new();
    let _ = writeln!(out, "steps {} alpha_bar_T {:.3e}", a.steps, schedule.alpha_bar[a.steps - 1]);
    let _ = writeln!(out, "oracle denoiser linf {:.3e}", linf(&recovered));
    let _ = writeln!(out, "zero denoiser linf {:.3e}", linf(&zero));
    if let Some(path) = &a.out {
        let d = gdf.bounds.diagonal();
        let sampled = crate::gdf::GdfVolume::new(gdf.resolution, gdf.bounds, recovered.iter().map(|v| v * d).collect())?;
        save_gdf(&sampled, path)?;
        // read back so the written file is checked
        load_gdf(path)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(out)
}
