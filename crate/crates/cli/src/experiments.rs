//! Experiment drivers shared by the CLI commands and the test suites.

use metamorph_core::synthetic::{render_scene, smooth_random_field};
use metamorph_core::{
    optimize_with, shoot_observed, Error, GaussianKernel, GeodesicTrajectory, Iterate, OptimizeConfig,
    OptimizeResult, Preset, RegistrationProblem, ScalarField, Scheme, ShootingConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::{Input, RunManifest};

/// Calibrated settings for the synthetic experiments on the 200 x 200
/// `c2disk` preset.
pub mod calibrated {
    pub const SIZE: usize = 200;
    pub const SIGMA: f64 = 4.0;
    /// Kernel width of the scheme comparison, narrow enough for the
    /// Eulerian run to break down at 38 steps.
    pub const SIGMA_COMPARE: f64 = 3.0;
    pub const LAMBDA: f64 = 3e-4;
    pub const RHO: f64 = 1e-3;
    pub const STEPS: usize = 20;
    pub const MAX_ITERS: usize = 40;
    /// Intensity rate of the metamorphic runs.
    pub const MU: f64 = 0.02;
    pub const STEPS_EULERIAN: usize = 38;
    pub const STEPS_SEMI_LAGRANGIAN: usize = 20;
    pub const STEPS_HYBRID: usize = 20;
}

/// Growth factor above which a scheme is called unstable.
pub const UNSTABLE_GROWTH: f64 = 10.0;
/// Total-variation ratio against the semi-Lagrangian result above which a
/// scheme is called rippled.
pub const RIPPLE_RATIO: f64 = 3.0;
/// Growth factor below which a scheme is called stable.
pub const STABLE_GROWTH: f64 = 2.0;

/// `count + 1` state indices spread evenly over `0..=n_steps`, endpoints
/// included and duplicates removed.
pub fn frame_indices(n_steps: usize, count: usize) -> Vec<usize> {
    let count = count.max(1);
    let mut out: Vec<usize> = (0..=count)
        .map(|k| ((k * n_steps) as f64 / count as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

pub fn synthetic_input(preset: &str, size: usize) -> Result<(Input, ScalarField, ScalarField), CliError> {
    let p = Preset::parse(preset)?;
    let (source_shapes, target_shapes) = p.shapes(size);
    let input = Input::Synthetic {
        preset: p.name().to_string(),
        size,
        source_shapes,
        target_shapes,
    };
    let (source, target) = load_input(&input)?;
    Ok((input, source, target))
}

/// Source and target images described by `input`.
pub fn load_input(input: &Input) -> Result<(ScalarField, ScalarField), CliError> {
    match input {
        Input::Synthetic {
            size,
            source_shapes,
            target_shapes,
            ..
        } => {
            let g = metamorph_core::GridGeometry::new(*size, *size)?;
            Ok((render_scene(source_shapes, g)?, render_scene(target_shapes, g)?))
        }
        Input::Files { source, target } => {
            let s = crate::io::read_image(source)?;
            let t = crate::io::read_image(target)?;
            s.geometry().ensure_same(&t.geometry())?;
            Ok((s, t))
        }
    }
}

pub struct Registration {
    pub problem: RegistrationProblem,
    pub result: OptimizeResult,
}

/// Runs the optimization a manifest describes. `on_iterate` sees every
/// accepted iterate.
pub fn run_registration(
    manifest: &RunManifest,
    source: ScalarField,
    target: ScalarField,
    on_iterate: impl FnMut(&Iterate),
) -> Result<Registration, CliError> {
    let problem = RegistrationProblem::new(source, target, manifest.lambda, manifest.rho, manifest.shooting.clone())?;
    let g = problem.source.geometry();
    let init = if manifest.init_noise == 0.0 {
        ScalarField::zeros(g)
    } else {
        smooth_random_field(g, 2.0, manifest.seed).scaled(manifest.init_noise)?
    };
    let result = optimize_with(&problem, &init, &manifest.optimizer, on_iterate)?;
    Ok(Registration { problem, result })
}

/// LDDMM momentum for the scheme comparison: semi-Lagrangian
/// registration with `mu = 0` on a synthetic preset.
pub fn lddmm_momentum(
    preset: &str,
    size: usize,
    sigma: f64,
    lambda: f64,
    rho: f64,
    max_iters: usize,
) -> Result<(ScalarField, ScalarField), CliError> {
    let (_, source, target) = synthetic_input(preset, size)?;
    let cfg = ShootingConfig::new(
        Scheme::SemiLagrangian,
        calibrated::STEPS,
        0.0,
        GaussianKernel::new(sigma)?,
    )?;
    let problem = RegistrationProblem::new(source, target, lambda, rho, cfg)?;
    let opt = OptimizeConfig {
        max_iters,
        ..OptimizeConfig::default()
    };
    let result = optimize_with(&problem, &ScalarField::zeros(problem.source.geometry()), &opt, |_| {})?;
    Ok((problem.source, result.z0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Growth below [`STABLE_GROWTH`] and no ripples.
    Stable,
    /// Bounded but neither stable nor unstable.
    Growing,
    /// Total variation of the final momentum above [`RIPPLE_RATIO`] times
    /// the semi-Lagrangian one.
    Rippled,
    /// Growth above [`UNSTABLE_GROWTH`].
    Unstable,
    /// The divergence guard stopped the integration.
    Diverged,
}

impl Verdict {
    pub fn is_failure(&self) -> bool {
        matches!(self, Verdict::Rippled | Verdict::Unstable | Verdict::Diverged)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub n_steps: usize,
    /// `max |z_t|` for every state reached.
    pub max_abs_z: Vec<f64>,
    /// Largest `max |z_t|` over its initial value (1 for zero momentum).
    pub growth: f64,
    pub diverged_at: Option<usize>,
    pub final_total_variation: Option<f64>,
    /// Final total variation over the semi-Lagrangian one.
    pub tv_ratio: Option<f64>,
    pub verdict: Verdict,
    #[serde(skip)]
    pub trajectory: Option<GeodesicTrajectory>,
}

/// Shoots `z0` from `image` with every `(scheme, n_steps)` pair and
/// classifies the runs against the semi-Lagrangian one (if present).
pub fn compare_schemes(
    image: &ScalarField,
    z0: &ScalarField,
    kernel: &GaussianKernel,
    runs: &[(Scheme, usize)],
) -> Result<Vec<SchemeReport>, CliError> {
    let shots: Vec<_> = metamorph_core::par::map(runs, |&(scheme, n_steps)| {
        let cfg = ShootingConfig::new(scheme, n_steps, 0.0, kernel.clone())?;
        let mut max_abs_z = Vec::with_capacity(n_steps + 1);
        let outcome = shoot_observed(image, z0, &cfg, |s| max_abs_z.push(s.momentum.max_abs()));
        Ok::<_, Error>((scheme, n_steps, max_abs_z, outcome))
    });

    let mut reports = Vec::with_capacity(runs.len());
    for shot in shots {
        let (scheme, n_steps, max_abs_z, outcome) = shot?;
        let z_init = z0.max_abs();
        let peak = max_abs_z.iter().copied().fold(z_init, f64::max);
        let growth = if z_init > 0.0 { peak / z_init } else { 1.0 };
        let (trajectory, diverged_at) = match outcome {
            Ok(t) => (Some(t), None),
            Err(Error::Divergence { step, .. }) => (None, Some(step)),
            Err(e) => return Err(e.into()),
        };
        let final_total_variation = trajectory
            .as_ref()
            .map(|t| t.final_state().momentum.total_variation());
        reports.push(SchemeReport {
            scheme,
            n_steps,
            max_abs_z,
            growth,
            diverged_at,
            final_total_variation,
            tv_ratio: None,
            verdict: Verdict::Stable,
            trajectory,
        });
    }

    let reference = reports
        .iter()
        .find(|r| r.scheme == Scheme::SemiLagrangian)
        .and_then(|r| r.final_total_variation);
    for r in &mut reports {
        r.tv_ratio = match (r.final_total_variation, reference) {
            (Some(tv), Some(sl)) if sl > 0.0 => Some(tv / sl),
            (Some(tv), Some(_)) => Some(if tv == 0.0 { 1.0 } else { f64::MAX }),
            _ => None,
        };
        r.verdict = if r.diverged_at.is_some() {
            Verdict::Diverged
        } else if r.growth > UNSTABLE_GROWTH {
            Verdict::Unstable
        } else if r.tv_ratio.is_some_and(|x| x > RIPPLE_RATIO) {
            Verdict::Rippled
        } else if r.growth < STABLE_GROWTH {
            Verdict::Stable
        } else {
            Verdict::Growing
        };
    }
    Ok(reports)
}
