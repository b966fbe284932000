//! Geodesic shooting: forward integration of the image / momentum / velocity
//! system from `(I0, z0)` over unit time.
//!
//! Each step computes `v = -K * (z grad I)` and then advances
//!
//! * the image, `dI/dt = -<grad I, v> + mu z`, and
//! * the momentum, `dz/dt = -div(z v)`,
//!
//! with either finite differences on the fixed grid (Eulerian) or by pulling
//! values back along the foot points `Id - dt v` (semi-Lagrangian). The
//! semi-Lagrangian momentum update applies the compression factor
//! `1 - dt div v` after the pullback. The hybrid scheme pulls the image back
//! but updates the momentum with finite differences.
//!
//! The `rho / mu` factor that multiplies the velocity in the continuous
//! equations is absorbed into the momentum scale, so the same formulas cover
//! LDDMM (`mu = 0`) and Metamorphosis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    compose_grid, divergence_raw, dot_raw, foot_points, gradient_raw, interpolate_raw,
    GridGeometry, SampleGrid, ScalarField, VectorField,
};
use crate::kernel::GaussianKernel;
use crate::par;

/// Any field value above this magnitude aborts shooting.
pub const DIVERGENCE_GUARD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Eulerian,
    SemiLagrangian,
    Hybrid,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Eulerian, Scheme::SemiLagrangian, Scheme::Hybrid];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Eulerian => "eulerian",
            Scheme::SemiLagrangian => "semi-lagrangian",
            Scheme::Hybrid => "hybrid",
        }
    }

    pub(crate) fn image_is_semi_lagrangian(&self) -> bool {
        !matches!(self, Scheme::Eulerian)
    }

    pub(crate) fn momentum_is_semi_lagrangian(&self) -> bool {
        matches!(self, Scheme::SemiLagrangian)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eulerian" => Ok(Scheme::Eulerian),
            "semi-lagrangian" => Ok(Scheme::SemiLagrangian),
            "hybrid" => Ok(Scheme::Hybrid),
            other => Err(Error::InvalidParameter(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub scheme: Scheme,
    /// Number of time steps T; the step is `1 / T`.
    pub n_steps: usize,
    /// Rate of additive intensity change. `0` gives LDDMM.
    pub mu: f64,
    pub kernel: GaussianKernel,
}

impl ShootingConfig {
    pub fn new(scheme: Scheme, n_steps: usize, mu: f64, kernel: GaussianKernel) -> Result<Self> {
        let cfg = Self {
            scheme,
            n_steps,
            mu,
            kernel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mu must be non-negative, got {}",
                self.mu
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicState {
    pub t: f64,
    pub image: ScalarField,
    pub momentum: ScalarField,
    pub velocity: VectorField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicTrajectory {
    /// States at `t = 0, dt, ..., 1`.
    pub states: Vec<GeodesicState>,
    /// Pullback map at `t = 1`: `I1 ≈ I0 ∘ deformation`.
    pub deformation: SampleGrid,
}

impl GeodesicTrajectory {
    pub fn final_state(&self) -> &GeodesicState {
        self.states.last().expect("trajectory always holds T + 1 states")
    }

    pub fn final_image(&self) -> &ScalarField {
        &self.final_state().image
    }

    /// `max_t |z_t|` per state.
    pub fn momentum_max_abs(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.momentum.max_abs()).collect()
    }
}

// ---------------------------------------------------------------------------
// Raw step kernels shared with the adjoint
// ---------------------------------------------------------------------------

/// `-K * (z grad I)` given a precomputed image gradient.
pub(crate) fn velocity_raw(
    z: &[f64],
    grad: &[Vec<f64>; 2],
    kernel: &GaussianKernel,
    g: GridGeometry,
) -> [Vec<f64>; 2] {
    let smooth = |c: usize| {
        let m: Vec<f64> = z.iter().zip(&grad[c]).map(|(a, b)| a * b).collect();
        let mut v = kernel.convolve(&m, g);
        v.iter_mut().for_each(|x| *x = -*x);
        v
    };
    let (a, b) = par::join(|| smooth(0), || smooth(1));
    [a, b]
}

pub(crate) fn advect_euler_raw(
    image: &[f64],
    grad: &[Vec<f64>; 2],
    v: &[Vec<f64>; 2],
    z: &[f64],
    mu: f64,
    dt: f64,
    g: GridGeometry,
) -> Vec<f64> {
    let w = g.width();
    let mut out = vec![0.0; g.len()];
    par::for_each_row(&mut out, w, |i, row| {
        for (j, o) in row.iter_mut().enumerate() {
            let k = i * w + j;
            let transport = grad[0][k] * v[0][k] + grad[1][k] * v[1][k];
            *o = image[k] + dt * (mu * z[k] - transport);
        }
    });
    out
}

pub(crate) fn advect_sl_raw(
    image: &[f64],
    foot: &[Vec<f64>; 2],
    z: &[f64],
    mu: f64,
    dt: f64,
    g: GridGeometry,
) -> Vec<f64> {
    let mut out = interpolate_raw(image, g, foot);
    let w = g.width();
    par::for_each_row(&mut out, w, |i, row| {
        for (j, o) in row.iter_mut().enumerate() {
            *o += dt * mu * z[i * w + j];
        }
    });
    out
}

pub(crate) fn continuity_euler_raw(
    z: &[f64],
    v: &[Vec<f64>; 2],
    dt: f64,
    g: GridGeometry,
) -> Vec<f64> {
    let flux = [
        z.iter().zip(&v[0]).map(|(a, b)| a * b).collect(),
        z.iter().zip(&v[1]).map(|(a, b)| a * b).collect(),
    ];
    let div = divergence_raw(&flux, g);
    z.iter().zip(&div).map(|(a, d)| a - dt * d).collect()
}

pub(crate) fn continuity_sl_raw(
    z: &[f64],
    foot: &[Vec<f64>; 2],
    div_v: &[f64],
    dt: f64,
    g: GridGeometry,
) -> Vec<f64> {
    let mut out = interpolate_raw(z, g, foot);
    out.iter_mut()
        .zip(div_v)
        .for_each(|(a, d)| *a *= 1.0 - dt * d);
    out
}

fn guard(values: &[f64], step: usize, field: &'static str) -> Result<()> {
    for &x in values {
        if !x.is_finite() || x.abs() > DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                step,
                field,
                value: x,
            });
        }
    }
    Ok(())
}

fn guard_vec(v: &[Vec<f64>; 2], step: usize) -> Result<()> {
    guard(&v[0], step, "velocity")?;
    guard(&v[1], step, "velocity")
}

// ---------------------------------------------------------------------------
// Public step operators
// ---------------------------------------------------------------------------

fn components(v: &VectorField) -> [Vec<f64>; 2] {
    [v.component(0).to_vec(), v.component(1).to_vec()]
}

/// `v = -K * (z grad I)`.
pub fn velocity_from_momentum(
    z: &ScalarField,
    image: &ScalarField,
    kernel: &GaussianKernel,
) -> Result<VectorField> {
    let g = image.geometry();
    g.ensure_same(&z.geometry())?;
    let grad = gradient_raw(image.values(), g);
    let [a, b] = velocity_raw(z.values(), &grad, kernel, g);
    guard(&a, 0, "velocity")?;
    guard(&b, 0, "velocity")?;
    Ok(VectorField::from_raw(g, a, b))
}

/// One explicit Euler step of the image transport with intensity source.
pub fn advect_image_euler(
    image: &ScalarField,
    v: &VectorField,
    z: &ScalarField,
    mu: f64,
    dt: f64,
) -> Result<ScalarField> {
    let g = image.geometry();
    g.ensure_same(&v.geometry())?;
    g.ensure_same(&z.geometry())?;
    let grad = gradient_raw(image.values(), g);
    let out = advect_euler_raw(image.values(), &grad, &components(v), z.values(), mu, dt, g);
    ScalarField::new(g, out)
}

/// Pullback of the image along `Id - dt v` plus the intensity source.
pub fn advect_image_sl(
    image: &ScalarField,
    v: &VectorField,
    z: &ScalarField,
    mu: f64,
    dt: f64,
) -> Result<ScalarField> {
    let g = image.geometry();
    g.ensure_same(&v.geometry())?;
    g.ensure_same(&z.geometry())?;
    let foot = foot_points(g, &components(v), -dt);
    ScalarField::new(g, advect_sl_raw(image.values(), &foot, z.values(), mu, dt, g))
}

/// `z - dt div(z v)`.
pub fn continuity_euler(z: &ScalarField, v: &VectorField, dt: f64) -> Result<ScalarField> {
    let g = z.geometry();
    g.ensure_same(&v.geometry())?;
    ScalarField::new(g, continuity_euler_raw(z.values(), &components(v), dt, g))
}

/// `z(Id - dt v) * (1 - dt div v)`.
pub fn continuity_sl(z: &ScalarField, v: &VectorField, dt: f64) -> Result<ScalarField> {
    let g = z.geometry();
    g.ensure_same(&v.geometry())?;
    let vc = components(v);
    let foot = foot_points(g, &vc, -dt);
    let div = divergence_raw(&vc, g);
    ScalarField::new(g, continuity_sl_raw(z.values(), &foot, &div, dt, g))
}

// ---------------------------------------------------------------------------
// Shooting
// ---------------------------------------------------------------------------

fn check_inputs(image: &ScalarField, z0: &ScalarField) -> Result<GridGeometry> {
    let g = image.geometry();
    g.ensure_same(&z0.geometry())?;
    Ok(g)
}

fn state(g: GridGeometry, k: usize, n: usize, image: Vec<f64>, z: Vec<f64>, v: [Vec<f64>; 2]) -> GeodesicState {
    let [a, b] = v;
    GeodesicState {
        t: k as f64 / n as f64,
        image: ScalarField::from_raw(g, image),
        momentum: ScalarField::from_raw(g, z),
        velocity: VectorField::from_raw(g, a, b),
    }
}

/// Integrates the geodesic equations from `(image, z0)` over `[0, 1]`.
///
/// Returns all `T + 1` states and the accumulated pullback map. Fails with
/// [`Error::Divergence`] as soon as any field leaves the guarded range.
pub fn shoot(image: &ScalarField, z0: &ScalarField, cfg: &ShootingConfig) -> Result<GeodesicTrajectory> {
    shoot_observed(image, z0, cfg, |_| {})
}

/// [`shoot`] calling `on_state` with every state as soon as it is complete,
/// so callers can still see the states reached before a divergence.
pub fn shoot_observed<F>(
    image: &ScalarField,
    z0: &ScalarField,
    cfg: &ShootingConfig,
    mut on_state: F,
) -> Result<GeodesicTrajectory>
where
    F: FnMut(&GeodesicState),
{
    cfg.validate()?;
    let g = check_inputs(image, z0)?;
    let n = cfg.n_steps;
    let dt = cfg.dt();
    let (mu, kernel, scheme) = (cfg.mu, &cfg.kernel, cfg.scheme);

    let mut states = Vec::with_capacity(n + 1);
    let mut phi = SampleGrid::identity(g);
    let mut img = image.values().to_vec();
    let mut z = z0.values().to_vec();
    guard(&img, 0, "image")?;
    guard(&z, 0, "momentum")?;

    for k in 0..n {
        let grad = gradient_raw(&img, g);
        let v = velocity_raw(&z, &grad, kernel, g);
        guard_vec(&v, k)?;
        let foot = foot_points(g, &v, -dt);

        let next_img = if scheme.image_is_semi_lagrangian() {
            advect_sl_raw(&img, &foot, &z, mu, dt, g)
        } else {
            advect_euler_raw(&img, &grad, &v, &z, mu, dt, g)
        };
        let next_z = if scheme.momentum_is_semi_lagrangian() {
            let div = divergence_raw(&v, g);
            continuity_sl_raw(&z, &foot, &div, dt, g)
        } else {
            continuity_euler_raw(&z, &v, dt, g)
        };
        guard(&next_img, k + 1, "image")?;
        guard(&next_z, k + 1, "momentum")?;
        phi = compose_grid(&phi, &foot);

        let s = state(g, k, n, std::mem::replace(&mut img, next_img), std::mem::replace(&mut z, next_z), v);
        on_state(&s);
        states.push(s);
    }
    let grad = gradient_raw(&img, g);
    let v = velocity_raw(&z, &grad, kernel, g);
    guard_vec(&v, n)?;
    let last = state(g, n, n, img, z, v);
    on_state(&last);
    states.push(last);

    Ok(GeodesicTrajectory {
        states,
        deformation: phi,
    })
}

/// Pure-deformation (LDDMM) shooting, coded without any intensity source.
///
/// Used as an independent check that [`shoot`] with `mu = 0` reduces to the
/// diffeomorphic equations.
pub fn shoot_lddmm(
    image: &ScalarField,
    z0: &ScalarField,
    scheme: Scheme,
    n_steps: usize,
    kernel: &GaussianKernel,
) -> Result<GeodesicTrajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    let g = check_inputs(image, z0)?;
    let (h, w) = (g.height(), g.width());
    let dt = 1.0 / n_steps as f64;

    let mut states = Vec::with_capacity(n_steps + 1);
    let mut phi = SampleGrid::identity(g);
    let mut img = image.values().to_vec();
    let mut z = z0.values().to_vec();

    for k in 0..=n_steps {
        let grad = gradient_raw(&img, g);
        let v = velocity_raw(&z, &grad, kernel, g);
        guard_vec(&v, k)?;
        if k == n_steps {
            states.push(state(g, k, n_steps, img, z, v));
            break;
        }
        let mut foot = [vec![0.0; g.len()], vec![0.0; g.len()]];
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                foot[0][p] = i as f64 - dt * v[0][p];
                foot[1][p] = j as f64 - dt * v[1][p];
            }
        }

        let next_img: Vec<f64> = match scheme {
            Scheme::Eulerian => (0..g.len())
                .map(|p| img[p] - dt * (grad[0][p] * v[0][p] + grad[1][p] * v[1][p]))
                .collect(),
            Scheme::SemiLagrangian | Scheme::Hybrid => interpolate_raw(&img, g, &foot),
        };
        let next_z: Vec<f64> = match scheme {
            Scheme::SemiLagrangian => {
                let pulled = interpolate_raw(&z, g, &foot);
                let div_v = divergence_raw(&v, g);
                pulled
                    .iter()
                    .zip(&div_v)
                    .map(|(a, d)| a * (1.0 - dt * d))
                    .collect()
            }
            Scheme::Eulerian | Scheme::Hybrid => {
                let flux = [
                    (0..g.len()).map(|p| z[p] * v[0][p]).collect(),
                    (0..g.len()).map(|p| z[p] * v[1][p]).collect(),
                ];
                let div = divergence_raw(&flux, g);
                (0..g.len()).map(|p| z[p] - dt * div[p]).collect()
            }
        };
        guard(&next_img, k + 1, "image")?;
        guard(&next_z, k + 1, "momentum")?;
        phi = compose_grid(&phi, &foot);
        states.push(state(g, k, n_steps, img, z, v));
        img = next_img;
        z = next_z;
    }

    Ok(GeodesicTrajectory {
        states,
        deformation: phi,
    })
}

/// Per-state energy `<m_t, K * m_t> + rho |z_t|^2` with `m_t = z_t grad I_t`.
///
/// With `rho = mu` this is (twice) the Hamiltonian of the shooting system
/// and is constant along exact geodesics; the drift measures discretization
/// error.
pub fn path_energy(traj: &GeodesicTrajectory, rho: f64, kernel: &GaussianKernel) -> Vec<f64> {
    traj.states
        .iter()
        .map(|s| {
            let g = s.image.geometry();
            let grad = gradient_raw(s.image.values(), g);
            let z = s.momentum.values();
            let m = VectorField::from_raw(
                g,
                z.iter().zip(&grad[0]).map(|(a, b)| a * b).collect(),
                z.iter().zip(&grad[1]).map(|(a, b)| a * b).collect(),
            );
            kernel.v_norm_sq(&m) + rho * dot_raw(z, z, g.width())
        })
        .collect()
}
