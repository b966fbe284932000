use metamorph_core::synthetic::{render, smooth_random_field, smooth_random_vec};
use metamorph_core::*;

fn geom(n: usize) -> GridGeometry {
    GridGeometry::new(n, n).unwrap()
}

/// Smooth bump of height 1 and radius `r`, exactly zero outside.
fn bump(g: GridGeometry, c: (f64, f64), r: f64) -> ScalarField {
    ScalarField::from_fn(g, |i, j| {
        let d2 = ((i as f64 - c.0).powi(2) + (j as f64 - c.1).powi(2)) / (r * r);
        if d2 < 1.0 {
            (1.0 - d2).powi(3)
        } else {
            0.0
        }
    })
}

fn linf(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn eulerian_continuity_conserves_interior_mass() {
    let g = geom(40);
    let v = smooth_random_vec(g, 3.0, 4).component_field(0);
    let w = smooth_random_vec(g, 3.0, 5).component_field(1);
    let v = VectorField::new(g, v.scaled(3.0).unwrap().into_values(), w.scaled(3.0).unwrap().into_values()).unwrap();
    let mut z = bump(g, (19.0, 21.0), 9.0).axpy(-0.7, &bump(g, (24.0, 15.0), 6.0)).unwrap();
    let mass0 = z.sum();
    for _ in 0..10 {
        let next = continuity_euler(&z, &v, 0.05).unwrap();
        let scale = z.values().iter().map(|x| x.abs()).sum::<f64>();
        assert!((next.sum() - z.sum()).abs() <= 1e-6 * scale);
        z = next;
    }
    assert!((z.sum() - mass0).abs() <= 1e-12 * mass0.abs().max(1.0) * 10.0);
}

#[test]
fn semi_lagrangian_continuity_nearly_conserves_mass_over_unit_time() {
    let g = geom(48);
    let image = render(&ShapeSpec::disk((23.5, 23.5), 10.0, 1.0).with_smoothing(2.5), g).unwrap();
    let z0 = bump(g, (23.5, 23.5), 14.0).scaled(40.0).unwrap();
    let cfg = ShootingConfig::new(Scheme::SemiLagrangian, 20, 0.0, GaussianKernel::new(3.0).unwrap()).unwrap();
    let traj = shoot(&image, &z0, &cfg).unwrap();
    assert!(traj.states.iter().any(|s| s.velocity.max_norm() > 0.5));
    let m0 = z0.sum();
    for s in &traj.states {
        let rel = (s.momentum.sum() - m0).abs() / m0;
        assert!(rel <= 1e-2, "t = {}: {rel}", s.t);
    }
}

#[test]
fn eulerian_and_semi_lagrangian_agree_on_smooth_data() {
    let g = geom(40);
    let image = render(&ShapeSpec::disk((19.5, 19.5), 9.0, 1.0).with_smoothing(3.0), g).unwrap();
    let z0 = bump(g, (19.5, 19.5), 14.0).scaled(60.0).unwrap();
    let kernel = GaussianKernel::new(3.0).unwrap();
    let moved = shoot(&image, &z0, &ShootingConfig::new(Scheme::SemiLagrangian, 20, 0.0, kernel.clone()).unwrap()).unwrap();
    assert!(linf(moved.final_image(), &image) > 0.15);
    let gap = |t: usize| {
        let run = |scheme| {
            let cfg = ShootingConfig::new(scheme, t, 0.0, kernel.clone()).unwrap();
            shoot(&image, &z0, &cfg).unwrap().final_image().clone()
        };
        linf(&run(Scheme::Eulerian), &run(Scheme::SemiLagrangian))
    };
    let (g10, g20, g40) = (gap(10), gap(20), gap(40));
    assert!(g20 < 5e-2, "{g20}");
    assert!(g40 < g20 && g20 < g10, "{g10} {g20} {g40}");
}

#[test]
fn metamorphosis_energy_is_nearly_constant_on_smooth_geodesics() {
    let g = geom(48);
    let image = render(&ShapeSpec::disk((23.5, 23.5), 11.0, 1.0).with_smoothing(3.0), g).unwrap();
    // Interior support: the border stencils are not exact transposes of
    // each other, which breaks the discrete conservation law there.
    let noise = smooth_random_field(g, 3.0, 9);
    let window = bump(g, (23.5, 23.5), 20.0);
    let z0 = ScalarField::from_fn(g, |i, j| 400.0 * noise.get(i, j) * window.get(i, j));
    let kernel = GaussianKernel::new(4.0).unwrap();
    let mu = 0.05;
    for scheme in Scheme::ALL {
        let cfg = ShootingConfig::new(scheme, 20, mu, kernel.clone()).unwrap();
        let traj = shoot(&image, &z0, &cfg).unwrap();
        assert!(traj.states[0].velocity.max_norm() > 0.5);
        let e = path_energy(&traj, mu, &kernel);
        let drift = e.iter().map(|x| (x - e[0]).abs() / e[0]).fold(0.0, f64::max);
        assert!(drift < 0.1, "{scheme}: {drift}");
    }
}

#[test]
fn directional_derivative_matches_gradient() {
    let g = geom(16);
    let source = render(&ShapeSpec::disk((7.5, 7.0), 4.0, 1.0).with_smoothing(1.2), g).unwrap();
    let target = render(&ShapeSpec::disk((8.0, 8.5), 4.5, 1.0).with_smoothing(1.2), g).unwrap();
    for scheme in Scheme::ALL {
        for mu in [0.0, 0.05] {
            let cfg = ShootingConfig::new(scheme, 8, mu, GaussianKernel::new(1.5).unwrap()).unwrap();
            let p = RegistrationProblem::new(source.clone(), target.clone(), 0.01, 0.5, cfg).unwrap();
            let z0 = smooth_random_field(g, 1.0, 3).scaled(2.0).unwrap();
            let grad = p.grad(&z0).unwrap();
            for seed in 0..3 {
                let d = smooth_random_field(g, 0.0, 100 + seed);
                let d = d.scaled(1.0 / dot(&d, &d).unwrap().sqrt()).unwrap();
                let eps = 1e-4;
                let fp = p.cost(&z0.axpy(eps, &d).unwrap()).unwrap().total;
                let fm = p.cost(&z0.axpy(-eps, &d).unwrap()).unwrap().total;
                let fd = (fp - fm) / (2.0 * eps);
                let an = dot(&grad, &d).unwrap();
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(fd.abs()), "{scheme} mu={mu}: {fd} vs {an}");
            }
        }
    }
}

#[test]
fn seed_zero_random_field_matches_the_frozen_values() {
    let text = include_str!("golden/smooth_random_seed0.txt");
    let expected: Vec<f64> = text
        .split_whitespace()
        .map(|x| x.parse().unwrap())
        .collect();
    let f = smooth_random_field(GridGeometry::new(6, 5).unwrap(), 1.5, 0);
    assert_eq!(f.values().len(), expected.len());
    for (a, b) in f.values().iter().zip(&expected) {
        assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
    }
}
