//! Reverse accumulation through the discrete shooting steps.
//!
//! Every function here is the transpose of the Jacobian of the matching
//! forward kernel in `integrator`, evaluated at the stored forward states.

use crate::fields::{
    divergence_adjoint_raw, divergence_raw, foot_points, gradient_adjoint_raw, gradient_raw,
    interpolate_adjoint_values, interpolate_raw, sample_coord_grad, GridGeometry,
};
use crate::integrator::{GeodesicState, ShootingConfig};

fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn components(s: &GeodesicState) -> [&[f64]; 2] {
    [s.velocity.component(0), s.velocity.component(1)]
}

/// Accumulates `cotangent * d sample(values, foot) / d foot` into `foot_bar`.
fn add_coord_cotangent(
    foot_bar: &mut [Vec<f64>; 2],
    values: &[f64],
    foot: &[Vec<f64>; 2],
    cotangent: &[f64],
    g: GridGeometry,
) {
    for k in 0..g.len() {
        let c = cotangent[k];
        if c == 0.0 {
            continue;
        }
        let [dx, dy] = sample_coord_grad(values, g, foot[0][k], foot[1][k]);
        foot_bar[0][k] += c * dx;
        foot_bar[1][k] += c * dy;
    }
}

/// Pulls `(image_bar, momentum_bar)` at state `k + 1` back through the step
/// that produced it from `state` (state `k`).
fn step_back(
    state: &GeodesicState,
    cfg: &ShootingConfig,
    image_bar_next: &[f64],
    momentum_bar_next: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let g = state.image.geometry();
    let n = g.len();
    let dt = cfg.dt();
    let mu = cfg.mu;
    let img = state.image.values();
    let z = state.momentum.values();
    let v = components(state);
    let v_owned = [v[0].to_vec(), v[1].to_vec()];
    let grad = gradient_raw(img, g);
    let foot = foot_points(g, &v_owned, -dt);

    let mut image_bar = zeros(n);
    let mut z_bar = zeros(n);
    let mut v_bar = [zeros(n), zeros(n)];
    let mut grad_bar = [zeros(n), zeros(n)];
    let mut foot_bar = [zeros(n), zeros(n)];

    // image update
    if cfg.scheme.image_is_semi_lagrangian() {
        // I' = sample(I, foot) + dt mu z
        let pulled = interpolate_adjoint_values(image_bar_next, g, &foot);
        image_bar.iter_mut().zip(&pulled).for_each(|(a, b)| *a += b);
        add_coord_cotangent(&mut foot_bar, img, &foot, image_bar_next, g);
    } else {
        // I' = I + dt (mu z - <grad I, v>)
        for k in 0..n {
            let c = image_bar_next[k];
            image_bar[k] += c;
            for a in 0..2 {
                grad_bar[a][k] -= dt * c * v[a][k];
                v_bar[a][k] -= dt * c * grad[a][k];
            }
        }
    }
    for k in 0..n {
        z_bar[k] += dt * mu * image_bar_next[k];
    }

    // momentum update
    if cfg.scheme.momentum_is_semi_lagrangian() {
        // z' = sample(z, foot) * (1 - dt div v)
        let pulled = interpolate_raw(z, g, &foot);
        let div_v = divergence_raw(&v_owned, g);
        let mut pulled_bar = zeros(n);
        let mut div_bar = zeros(n);
        for k in 0..n {
            pulled_bar[k] = momentum_bar_next[k] * (1.0 - dt * div_v[k]);
            div_bar[k] = -dt * momentum_bar_next[k] * pulled[k];
        }
        let [da, db] = divergence_adjoint_raw(&div_bar, g);
        for k in 0..n {
            v_bar[0][k] += da[k];
            v_bar[1][k] += db[k];
        }
        let back = interpolate_adjoint_values(&pulled_bar, g, &foot);
        z_bar.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
        add_coord_cotangent(&mut foot_bar, z, &foot, &pulled_bar, g);
    } else {
        // z' = z - dt div(z v)
        let scaled: Vec<f64> = momentum_bar_next.iter().map(|c| -dt * c).collect();
        let flux_bar = divergence_adjoint_raw(&scaled, g);
        for k in 0..n {
            z_bar[k] += momentum_bar_next[k] + flux_bar[0][k] * v[0][k] + flux_bar[1][k] * v[1][k];
            v_bar[0][k] += flux_bar[0][k] * z[k];
            v_bar[1][k] += flux_bar[1][k] * z[k];
        }
    }

    // foot = Id - dt v
    for a in 0..2 {
        for k in 0..n {
            v_bar[a][k] -= dt * foot_bar[a][k];
        }
    }

    // v = -K m,  m = z grad I
    for a in 0..2 {
        let m_bar = cfg.kernel.convolve_adjoint(&v_bar[a], g);
        for k in 0..n {
            z_bar[k] -= m_bar[k] * grad[a][k];
            grad_bar[a][k] -= m_bar[k] * z[k];
        }
    }

    // grad = G I
    let back = gradient_adjoint_raw(&grad_bar, g);
    image_bar.iter_mut().zip(&back).for_each(|(a, b)| *a += b);

    (image_bar, z_bar)
}

/// Gradient of a scalar function of the final image with respect to the
/// initial momentum, given the function's gradient `final_image_bar` with
/// respect to `I_T`.
///
/// `states` must hold the forward states `0..=T` of the shoot.
pub(crate) fn initial_momentum_cotangent(
    states: &[GeodesicState],
    cfg: &ShootingConfig,
    final_image_bar: Vec<f64>,
) -> Vec<f64> {
    let n = final_image_bar.len();
    let mut image_bar = final_image_bar;
    let mut z_bar = zeros(n);
    for state in states[..cfg.n_steps].iter().rev() {
        let (ib, zb) = step_back(state, cfg, &image_bar, &z_bar);
        image_bar = ib;
        z_bar = zb;
    }
    z_bar
}
