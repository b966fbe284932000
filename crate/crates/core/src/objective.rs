//! Inexact-matching cost shared by LDDMM and Metamorphosis, and its exact
//! discrete gradient with respect to the initial momentum.
//!
//! ```text
//! H(z0) = 1/2 |I1 - J|^2 + lambda ( <m0, K * m0> + rho |z0|^2 ),   m0 = z0 grad I0
//! ```

use serde::{Deserialize, Serialize};

use crate::adjoint::initial_momentum_cotangent;
use crate::error::{Error, Result};
use crate::fields::{dot_raw, gradient_raw, ssd_raw, ScalarField, VectorField};
use crate::integrator::{shoot, GeodesicTrajectory, ShootingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: f64,
    /// `1/2 |I1 - J|^2`
    pub data_term: f64,
    /// `|v0|_V^2 = <m0, K * m0>`
    pub v_norm: f64,
    /// `|z0|^2`
    pub z_norm: f64,
}

impl CostReport {
    fn new(data_term: f64, v_norm: f64, z_norm: f64, lambda: f64, rho: f64) -> Self {
        Self {
            total: data_term + lambda * (v_norm + rho * z_norm),
            data_term,
            v_norm,
            z_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationProblem {
    pub source: ScalarField,
    pub target: ScalarField,
    pub lambda: f64,
    pub rho: f64,
    pub config: ShootingConfig,
}

impl RegistrationProblem {
    pub fn new(
        source: ScalarField,
        target: ScalarField,
        lambda: f64,
        rho: f64,
        config: ShootingConfig,
    ) -> Result<Self> {
        source.geometry().ensure_same(&target.geometry())?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be non-negative, got {rho}")));
        }
        config.validate()?;
        Ok(Self {
            source,
            target,
            lambda,
            rho,
            config,
        })
    }

    fn check(&self, z0: &ScalarField) -> Result<()> {
        self.source.geometry().ensure_same(&z0.geometry())
    }

    /// Momentum vector field `z0 grad I0` that generates the initial velocity.
    fn initial_momentum_field(&self, z0: &ScalarField) -> [Vec<f64>; 2] {
        let grad = gradient_raw(self.source.values(), self.source.geometry());
        let z = z0.values();
        [
            z.iter().zip(&grad[0]).map(|(a, b)| a * b).collect(),
            z.iter().zip(&grad[1]).map(|(a, b)| a * b).collect(),
        ]
    }

    fn report(&self, z0: &ScalarField, traj: &GeodesicTrajectory) -> CostReport {
        let g = self.source.geometry();
        let w = g.width();
        let data = ssd_raw(traj.final_image().values(), self.target.values(), w);
        let [a, b] = self.initial_momentum_field(z0);
        let v_norm = self
            .config
            .kernel
            .v_norm_sq(&VectorField::from_raw(g, a, b));
        let z_norm = dot_raw(z0.values(), z0.values(), w);
        CostReport::new(data, v_norm, z_norm, self.lambda, self.rho)
    }

    pub fn shoot(&self, z0: &ScalarField) -> Result<GeodesicTrajectory> {
        self.check(z0)?;
        shoot(&self.source, z0, &self.config)
    }

    pub fn cost(&self, z0: &ScalarField) -> Result<CostReport> {
        let traj = self.shoot(z0)?;
        Ok(self.report(z0, &traj))
    }

    pub fn grad(&self, z0: &ScalarField) -> Result<ScalarField> {
        self.cost_and_grad(z0).map(|(_, g)| g)
    }

    /// Cost and its gradient from a single forward shoot.
    pub fn cost_and_grad(&self, z0: &ScalarField) -> Result<(CostReport, ScalarField)> {
        let traj = self.shoot(z0)?;
        let report = self.report(z0, &traj);
        let g = self.source.geometry();
        let n = g.len();

        let residual: Vec<f64> = traj
            .final_image()
            .values()
            .iter()
            .zip(self.target.values())
            .map(|(a, b)| a - b)
            .collect();
        let mut grad = initial_momentum_cotangent(&traj.states, &self.config, residual);

        // d/dz0 <m, K m> = grad I0 . (K + K^T) m
        let src_grad = gradient_raw(self.source.values(), g);
        let m = self.initial_momentum_field(z0);
        let kernel = &self.config.kernel;
        for a in 0..2 {
            let km = kernel.convolve(&m[a], g);
            let ktm = kernel.convolve_adjoint(&m[a], g);
            for k in 0..n {
                grad[k] += self.lambda * src_grad[a][k] * (km[k] + ktm[k]);
            }
        }
        let z = z0.values();
        for k in 0..n {
            grad[k] += 2.0 * self.lambda * self.rho * z[k];
        }
        if let Some(index) = grad.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "cost gradient",
                index,
            });
        }
        Ok((report, ScalarField::from_raw(g, grad)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ssd, GridGeometry};
    use crate::integrator::Scheme;
    use crate::kernel::GaussianKernel;
    use crate::synthetic::smooth_random_field;

    fn blob(g: GridGeometry, ci: f64, cj: f64, r: f64) -> ScalarField {
        ScalarField::from_fn(g, |i, j| {
            let d = ((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)).sqrt();
            1.0 / (1.0 + ((d - r) * 1.5).exp())
        })
    }

    fn problem(scheme: Scheme, n_steps: usize, mu: f64, size: usize) -> RegistrationProblem {
        let g = GridGeometry::new(size, size).unwrap();
        let c = size as f64 / 2.0;
        let cfg = ShootingConfig::new(scheme, n_steps, mu, GaussianKernel::new(1.5).unwrap()).unwrap();
        RegistrationProblem::new(
            blob(g, c - 0.5, c, size as f64 / 4.0),
            blob(g, c + 0.7, c - 0.4, size as f64 / 4.0 + 0.5),
            0.01,
            0.5,
            cfg,
        )
        .unwrap()
    }

    fn finite_difference(p: &RegistrationProblem, z0: &ScalarField, h: f64) -> Vec<f64> {
        let g = z0.geometry();
        (0..g.len())
            .map(|k| {
                let mut plus = z0.values().to_vec();
                let mut minus = z0.values().to_vec();
                plus[k] += h;
                minus[k] -= h;
                let fp = p.cost(&ScalarField::new(g, plus).unwrap()).unwrap().total;
                let fm = p.cost(&ScalarField::new(g, minus).unwrap()).unwrap().total;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let den = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
        num / den
    }

    #[test]
    fn identical_images_cost_nothing_at_zero_momentum() {
        let p = problem(Scheme::SemiLagrangian, 4, 0.1, 12);
        let same = RegistrationProblem::new(p.source.clone(), p.source.clone(), 0.1, 1.0, p.config.clone()).unwrap();
        let z0 = ScalarField::zeros(p.source.geometry());
        assert_eq!(same.cost(&z0).unwrap().total, 0.0);
        assert_eq!(same.grad(&z0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn zero_momentum_cost_is_ssd() {
        let p = problem(Scheme::Eulerian, 3, 0.0, 12);
        let z0 = ScalarField::zeros(p.source.geometry());
        let r = p.cost(&z0).unwrap();
        assert_eq!(r.total, ssd(&p.source, &p.target).unwrap());
        assert_eq!((r.v_norm, r.z_norm), (0.0, 0.0));
    }

    #[test]
    fn report_terms_match_recomputation() {
        let p = problem(Scheme::Hybrid, 5, 0.05, 14);
        let g = p.source.geometry();
        let z0 = smooth_random_field(g, 1.5, 3).scaled(2.0).unwrap();
        let r = p.cost(&z0).unwrap();
        let traj = shoot(&p.source, &z0, &p.config).unwrap();
        let data = ssd(traj.final_image(), &p.target).unwrap();
        // <m, K m> = -<m, v0> since v0 = -K m
        let grad = crate::fields::gradient(&p.source);
        let mut vn = 0.0;
        let mut zn = 0.0;
        for i in 0..14 {
            for j in 0..14 {
                let m = [z0.get(i, j) * grad.get(i, j)[0], z0.get(i, j) * grad.get(i, j)[1]];
                let v = traj.states[0].velocity.get(i, j);
                vn -= m[0] * v[0] + m[1] * v[1];
                zn += z0.get(i, j).powi(2);
            }
        }
        assert!((r.data_term - data).abs() <= 1e-12 * data);
        assert!((r.v_norm - vn).abs() <= 1e-10 * vn);
        assert!((r.z_norm - zn).abs() <= 1e-12 * zn);
        assert_eq!(r.total, r.data_term + p.lambda * (r.v_norm + p.rho * r.z_norm));
    }

    #[test]
    fn gradient_matches_finite_differences_single_step() {
        for scheme in Scheme::ALL {
            for mu in [0.0, 0.05] {
                let p = problem(scheme, 1, mu, 8);
                let z0 = smooth_random_field(p.source.geometry(), 1.0, 11).scaled(3.0).unwrap();
                let g = p.grad(&z0).unwrap();
                let fd = finite_difference(&p, &z0, 1e-4);
                let err = rel_linf(g.values(), &fd);
                assert!(err <= 1e-5, "{scheme} mu={mu}: {err}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_multi_step() {
        for scheme in Scheme::ALL {
            let p = problem(scheme, 6, 0.05, 10);
            let z0 = smooth_random_field(p.source.geometry(), 1.0, 5).scaled(3.0).unwrap();
            let g = p.grad(&z0).unwrap();
            let fd = finite_difference(&p, &z0, 1e-4);
            let err = rel_linf(g.values(), &fd);
            assert!(err <= 1e-4, "{scheme}: {err}");
        }
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let p = problem(Scheme::Eulerian, 2, 0.0, 8);
        let wrong = ScalarField::zeros(GridGeometry::new(8, 9).unwrap());
        assert!(matches!(p.cost(&wrong), Err(Error::GeometryMismatch { .. })));
        assert!(RegistrationProblem::new(p.source.clone(), wrong, 1.0, 1.0, p.config.clone()).is_err());
        assert!(RegistrationProblem::new(p.source.clone(), p.target.clone(), 0.0, 1.0, p.config.clone()).is_err());
        assert!(RegistrationProblem::new(p.source.clone(), p.target.clone(), 1.0, -1.0, p.config.clone()).is_err());
    }
}
