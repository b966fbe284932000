//! Argument parsing and the three subcommands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use metamorph_core::{
    path_energy, shoot, GaussianKernel, GeodesicTrajectory, OptimizeConfig, Scheme,
    ShootingConfig, Termination,
};
use serde_json::json;

use crate::error::{exit, CliError};
use crate::experiments::{self, calibrated, frame_indices, SchemeReport};
use crate::io::{read_image, write_image};
use crate::manifest::{metrics_csv, write_json, Input, Outcome, RunManifest, SCHEMA_VERSION};
use crate::render;

#[derive(Debug, Parser)]
#[command(name = "metamorph", version, about = "Geodesic shooting registration with LDDMM and Metamorphosis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the initial momentum matching a source to a target image.
    Register(RegisterArgs),
    /// Integrate the geodesic equations from a given initial momentum.
    Shoot(ShootArgs),
    /// Shoot one momentum with all three schemes and judge their stability.
    CompareSchemes(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = Scheme::SemiLagrangian)]
    pub scheme: Scheme,
    /// Number of time steps over [0, 1].
    #[arg(long, default_value_t = calibrated::STEPS)]
    pub steps: usize,
    /// Intensity rate; 0 gives LDDMM.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Kernel standard deviation in pixels.
    #[arg(long, default_value_t = calibrated::SIGMA)]
    pub sigma: f64,
}

impl ModelArgs {
    fn config(&self) -> Result<ShootingConfig, CliError> {
        Ok(ShootingConfig::new(self.scheme, self.steps, self.mu, GaussianKernel::new(self.sigma)?)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RegisterArgs {
    #[arg(long, requires = "target", conflicts_with = "synthetic")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
    /// Built-in image pair instead of files (`c2disk`).
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Grid size of the synthetic pair.
    #[arg(long, default_value_t = calibrated::SIZE)]
    pub size: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Weight of the momentum norm in the regularizer.
    #[arg(long, default_value_t = calibrated::RHO)]
    pub rho: f64,
    /// Regularization weight.
    #[arg(long, default_value_t = calibrated::LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = OptimizeConfig::default().max_iters)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of intervals between saved frames along the final geodesic.
    #[arg(long, default_value_t = 4)]
    pub save_frames: usize,
    /// Seed of the random initial momentum (used when --init-noise > 0).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Amplitude of a smooth random initial momentum; 0 starts from zero.
    #[arg(long, default_value_t = 0.0)]
    pub init_noise: f64,
    /// Rerun the configuration recorded in a manifest; other inputs are ignored.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ShootArgs {
    /// Initial momentum (.fld, .pgm or .png).
    #[arg(long)]
    pub z0: PathBuf,
    /// Initial image.
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Momentum weight in the reported path energy (defaults to mu).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub save_frames: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long, requires = "z0", conflicts_with = "synthetic")]
    pub image: Option<PathBuf>,
    #[arg(long, requires = "image")]
    pub z0: Option<PathBuf>,
    /// Compute z0 by an LDDMM registration of a built-in pair.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = calibrated::SIZE)]
    pub size: usize,
    #[arg(long, default_value_t = calibrated::SIGMA_COMPARE)]
    pub sigma: f64,
    #[arg(long, default_value_t = calibrated::LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = calibrated::RHO)]
    pub rho: f64,
    /// Iterations of the registration producing z0.
    #[arg(long, default_value_t = calibrated::MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = calibrated::STEPS_EULERIAN)]
    pub steps_eulerian: usize,
    #[arg(long, default_value_t = calibrated::STEPS_SEMI_LAGRANGIAN)]
    pub steps_sl: usize,
    #[arg(long, default_value_t = calibrated::STEPS_HYBRID)]
    pub steps_hybrid: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub save_frames: usize,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr, summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return exit::OK;
            }
            let err = CliError::Usage(e.to_string().lines().next().unwrap_or("").to_string());
            eprintln!("{}", err.diagnostic());
            return err.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Register(a) => register(&a),
        Command::Shoot(a) => shoot_cmd(&a),
        Command::CompareSchemes(a) => compare_cmd(&a),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            exit::OK
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir.join("frames")).map_err(|e| CliError::io(dir, e))
}

fn write_png(img: &image::RgbImage, path: &Path) -> Result<(), CliError> {
    img.save(path).map_err(|e| CliError::image(path, e))
}

fn pad(n_steps: usize) -> usize {
    n_steps.to_string().len().max(3)
}

/// Writes the saved frames, the deformation grid, a montage and the final
/// image of a trajectory. Momentum maps share the symmetric range max|z0|.
fn write_geodesic(dir: &Path, prefix: &str, traj: &GeodesicTrajectory, save_frames: usize) -> Result<(), CliError> {
    let n = traj.states.len() - 1;
    let scale = traj.states[0].momentum.max_abs();
    let width = pad(n);
    let mut images = Vec::new();
    let mut momenta = Vec::new();
    for k in frame_indices(n, save_frames) {
        let s = &traj.states[k];
        write_image(&s.image, &dir.join(format!("frames/{prefix}image_{k:0width$}.pgm")))?;
        let heat = render::heatmap(&s.momentum, scale);
        write_png(&heat, &dir.join(format!("frames/{prefix}momentum_{k:0width$}.png")))?;
        images.push(render::grayscale(&s.image));
        momenta.push(heat);
    }
    write_png(&render::montage(&[images, momenta], 2), &dir.join(format!("{prefix}montage.png")))?;
    write_png(
        &render::deformation_grid(&traj.deformation, 8),
        &dir.join(format!("{prefix}deformation.png")),
    )?;
    write_image(traj.final_image(), &dir.join(format!("{prefix}final_image.fld")))
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn register_manifest(a: &RegisterArgs) -> Result<RunManifest, CliError> {
    if let Some(path) = &a.replay {
        let mut m = RunManifest::read(path)?;
        m.created_unix = now_unix();
        m.outcome = None;
        return Ok(m);
    }
    let input = match (&a.synthetic, &a.source, &a.target) {
        (Some(preset), None, None) => experiments::synthetic_input(preset, a.size)?.0,
        (None, Some(source), Some(target)) => Input::Files {
            source: fs::canonicalize(source).map_err(|e| CliError::io(source, e))?,
            target: fs::canonicalize(target).map_err(|e| CliError::io(target, e))?,
        },
        _ => {
            return Err(CliError::Usage(
                "give either --synthetic or both --source and --target".into(),
            ))
        }
    };
    Ok(RunManifest {
        schema: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: now_unix(),
        input,
        shooting: a.model.config()?,
        lambda: a.lambda,
        rho: a.rho,
        optimizer: OptimizeConfig {
            max_iters: a.max_iters,
            ..OptimizeConfig::default()
        },
        seed: a.seed,
        init_noise: a.init_noise,
        save_frames: a.save_frames,
        outcome: None,
    })
}

fn register(a: &RegisterArgs) -> Result<String, CliError> {
    let mut manifest = register_manifest(a)?;
    let (source, target) = experiments::load_input(&manifest.input)?;
    create_dir(&a.out)?;
    write_image(&source, &a.out.join("source.pgm"))?;
    write_image(&target, &a.out.join("target.pgm"))?;

    let reg = experiments::run_registration(&manifest, source, target, |it| {
        eprintln!(
            "iteration {} total {:.6e} data {:.6e} step {:.3e}",
            it.iteration, it.cost.total, it.cost.data_term, it.step_size
        );
    })?;
    let res = &reg.result;
    let metrics = a.out.join("metrics.csv");
    fs::write(&metrics, metrics_csv(&res.history)).map_err(|e| CliError::io(&metrics, e))?;
    write_image(&res.z0, &a.out.join("z0.fld"))?;

    let initial = res.history[0].cost;
    let final_cost = *res.final_cost();
    let data_fraction = if initial.data_term > 0.0 {
        final_cost.data_term / initial.data_term
    } else {
        0.0
    };
    manifest.outcome = Some(Outcome {
        termination: res.termination,
        iterations: res.history.len() - 1,
        initial,
        final_cost,
        data_fraction,
        max_abs_z0: res.z0.max_abs(),
    });
    manifest.write(&a.out.join("manifest.json"))?;

    let traj = reg.problem.shoot(&res.z0)?;
    write_geodesic(&a.out, "", &traj, manifest.save_frames)?;

    if res.termination == Termination::LineSearchFailure {
        return Err(CliError::LineSearch {
            iterations: res.history.len() - 1,
        });
    }
    Ok(json!({
        "command": "register",
        "termination": res.termination,
        "iterations": res.history.len() - 1,
        "initial": initial,
        "final": final_cost,
        "data_fraction": data_fraction,
        "out": a.out,
    })
    .to_string())
}

fn shoot_cmd(a: &ShootArgs) -> Result<String, CliError> {
    let cfg = a.model.config()?;
    let image = read_image(&a.image)?;
    let z0 = read_image(&a.z0)?;
    image.geometry().ensure_same(&z0.geometry())?;
    let traj = shoot(&image, &z0, &cfg)?;
    create_dir(&a.out)?;
    write_geodesic(&a.out, "", &traj, a.save_frames)?;

    let rho = a.rho.unwrap_or(a.model.mu);
    let energy = path_energy(&traj, rho, &cfg.kernel);
    let mut csv = String::from("step,t,energy\n");
    for (k, (e, s)) in energy.iter().zip(&traj.states).enumerate() {
        csv.push_str(&format!("{k},{},{e}\n", s.t));
    }
    let path = a.out.join("energy.csv");
    fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    let drift = relative_drift(&energy);
    write_json(
        &json!({
            "command": "shoot",
            "z0": a.z0,
            "image": a.image,
            "shooting": cfg,
            "rho": rho,
        }),
        &a.out.join("manifest.json"),
    )?;
    Ok(json!({
        "command": "shoot",
        "steps": cfg.n_steps,
        "energy_initial": energy[0],
        "energy_drift": drift,
        "max_abs_z": traj.momentum_max_abs().into_iter().fold(0.0, f64::max),
        "out": a.out,
    })
    .to_string())
}

/// `max_t |e_t - e_0| / e_0`, or 0 when `e_0 = 0`.
pub fn relative_drift(energy: &[f64]) -> f64 {
    let e0 = energy[0];
    if e0 == 0.0 {
        return 0.0;
    }
    energy.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max)
}

fn compare_cmd(a: &CompareArgs) -> Result<String, CliError> {
    let kernel = GaussianKernel::new(a.sigma)?;
    let (image, z0) = match (&a.synthetic, &a.image, &a.z0) {
        (Some(preset), None, None) => {
            experiments::lddmm_momentum(preset, a.size, a.sigma, a.lambda, a.rho, a.max_iters)?
        }
        (None, Some(image), Some(z0)) => {
            let (i, z) = (read_image(image)?, read_image(z0)?);
            i.geometry().ensure_same(&z.geometry())?;
            (i, z)
        }
        _ => {
            return Err(CliError::Usage(
                "give either --synthetic or both --image and --z0".into(),
            ))
        }
    };
    create_dir(&a.out)?;
    write_image(&z0, &a.out.join("z0.fld"))?;
    write_image(&image, &a.out.join("source.pgm"))?;

    let runs = [
        (Scheme::Eulerian, a.steps_eulerian),
        (Scheme::SemiLagrangian, a.steps_sl),
        (Scheme::Hybrid, a.steps_hybrid),
    ];
    let reports = experiments::compare_schemes(&image, &z0, &kernel, &runs)?;
    write_comparison(&a.out, &reports, a.save_frames, z0.max_abs())?;
    write_json(
        &json!({
            "command": "compare-schemes",
            "sigma": a.sigma,
            "lambda": a.lambda,
            "rho": a.rho,
            "max_iters": a.max_iters,
            "synthetic": a.synthetic,
            "size": a.size,
            "runs": runs,
        }),
        &a.out.join("manifest.json"),
    )?;
    Ok(json!({ "command": "compare-schemes", "schemes": reports }).to_string())
}

fn write_comparison(dir: &Path, reports: &[SchemeReport], save_frames: usize, scale: f64) -> Result<(), CliError> {
    let mut csv = String::from("scheme,step,t,max_abs_z\n");
    for r in reports {
        for (k, m) in r.max_abs_z.iter().enumerate() {
            csv.push_str(&format!("{},{k},{},{m}\n", r.scheme, k as f64 / r.n_steps as f64));
        }
    }
    let path = dir.join("growth.csv");
    fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    write_json(&reports, &dir.join("verdicts.json"))?;

    let mut image_rows = Vec::new();
    let mut momentum_rows = Vec::new();
    for r in reports {
        let Some(traj) = &r.trajectory else {
            continue;
        };
        write_geodesic(dir, &format!("{}_", r.scheme), traj, save_frames)?;
        let frames = frame_indices(r.n_steps, save_frames);
        image_rows.push(frames.iter().map(|&k| render::grayscale(&traj.states[k].image)).collect());
        momentum_rows.push(
            frames
                .iter()
                .map(|&k| render::heatmap(&traj.states[k].momentum, scale))
                .collect(),
        );
    }
    write_png(&render::montage(&image_rows, 2), &dir.join("montage_image.png"))?;
    write_png(&render::montage(&momentum_rows, 2), &dir.join("montage_momentum.png"))
}
