//! Synthetic test imagery: disks, annuli and "C" shapes, plus smooth random
//! fields for property tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GridGeometry, ScalarField, VectorField};
use crate::kernel::GaussianKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Disk,
    Annulus,
    /// An annulus with an angular gap.
    COpening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Centre in pixel coordinates `(row, column)`.
    pub center: (f64, f64),
    /// Ignored for disks.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Full angular width of the gap of a C, in degrees.
    pub opening_angle: f64,
    /// Direction of the gap of a C in degrees, measured from the row axis
    /// towards the column axis. `90` opens towards increasing columns.
    pub orientation: f64,
    pub intensity: f64,
    /// Width of an optional Gaussian blur applied after rasterization.
    pub smoothing_sigma: f64,
}

impl ShapeSpec {
    pub fn disk(center: (f64, f64), radius: f64, intensity: f64) -> Self {
        Self {
            kind: ShapeKind::Disk,
            center,
            inner_radius: 0.0,
            outer_radius: radius,
            opening_angle: 0.0,
            orientation: 0.0,
            intensity,
            smoothing_sigma: 0.0,
        }
    }

    pub fn annulus(center: (f64, f64), inner: f64, outer: f64, intensity: f64) -> Self {
        Self {
            kind: ShapeKind::Annulus,
            inner_radius: inner,
            ..Self::disk(center, outer, intensity)
        }
    }

    pub fn c_shape(center: (f64, f64), inner: f64, outer: f64, opening_angle: f64, intensity: f64) -> Self {
        Self {
            kind: ShapeKind::COpening,
            opening_angle,
            orientation: 90.0,
            ..Self::annulus(center, inner, outer, intensity)
        }
    }

    pub fn with_smoothing(mut self, sigma: f64) -> Self {
        self.smoothing_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(0.0..=1.0).contains(&self.intensity) {
            return bad(format!("shape intensity {} outside [0, 1]", self.intensity));
        }
        if !(self.outer_radius >= 0.0 && self.outer_radius.is_finite()) {
            return bad(format!("invalid outer radius {}", self.outer_radius));
        }
        if self.kind != ShapeKind::Disk && !(0.0 <= self.inner_radius && self.inner_radius < self.outer_radius) {
            return bad(format!(
                "need 0 <= inner < outer, got {} and {}",
                self.inner_radius, self.outer_radius
            ));
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return bad(format!("invalid smoothing sigma {}", self.smoothing_sigma));
        }
        if !(self.center.0.is_finite() && self.center.1.is_finite()) {
            return bad("non-finite centre".into());
        }
        Ok(())
    }

    fn contains(&self, i: usize, j: usize) -> bool {
        let di = i as f64 - self.center.0;
        let dj = j as f64 - self.center.1;
        let d2 = di * di + dj * dj;
        let outer2 = self.outer_radius * self.outer_radius;
        match self.kind {
            ShapeKind::Disk => d2 < outer2,
            ShapeKind::Annulus | ShapeKind::COpening => {
                let inner2 = self.inner_radius * self.inner_radius;
                if !(d2 < outer2 && d2 >= inner2) {
                    return false;
                }
                if self.kind == ShapeKind::Annulus {
                    return true;
                }
                let (s, c) = self.orientation.to_radians().sin_cos();
                let half = (self.opening_angle / 2.0).to_radians();
                // inside the gap when the angle to the gap direction is below half
                let along = di * c + dj * s;
                along <= d2.sqrt() * half.cos()
            }
        }
    }
}

/// Rasterizes one shape, sampling at pixel centres, then blurs it.
pub fn render(spec: &ShapeSpec, geometry: GridGeometry) -> Result<ScalarField> {
    spec.validate()?;
    let field = ScalarField::from_fn(geometry, |i, j| {
        if spec.contains(i, j) {
            spec.intensity
        } else {
            0.0
        }
    });
    if spec.smoothing_sigma > 0.0 {
        Ok(GaussianKernel::new(spec.smoothing_sigma)?.smooth_scalar(&field))
    } else {
        Ok(field)
    }
}

/// Pointwise maximum of several rendered shapes.
pub fn render_scene(specs: &[ShapeSpec], geometry: GridGeometry) -> Result<ScalarField> {
    let mut out = vec![0.0; geometry.len()];
    for spec in specs {
        let f = render(spec, geometry)?;
        out.iter_mut().zip(f.values()).for_each(|(a, b)| *a = f64::max(*a, *b));
    }
    ScalarField::new(geometry, out)
}

fn white_noise(geometry: GridGeometry, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..geometry.len())
        .map(|_| StandardNormal.sample(rng))
        .collect()
}

/// Unit-variance white noise blurred by a Gaussian of width `sigma`
/// (unblurred for `sigma = 0`).
pub fn smooth_random_field(geometry: GridGeometry, sigma: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = ScalarField::from_raw(geometry, white_noise(geometry, &mut rng));
    if sigma == 0.0 {
        return noise;
    }
    GaussianKernel::new(sigma)
        .expect("sigma must be positive")
        .smooth_scalar(&noise)
}

pub fn smooth_random_vec(geometry: GridGeometry, sigma: f64, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = white_noise(geometry, &mut rng);
    let b = white_noise(geometry, &mut rng);
    if sigma == 0.0 {
        return VectorField::from_raw(geometry, a, b);
    }
    GaussianKernel::new(sigma)
        .expect("sigma must be positive")
        .smooth_vector(&VectorField::from_raw(geometry, a, b))
}

/// Named source / target pairs used by the experiment drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// A "C" registered to a thicker "C" plus a small disk beyond its
    /// opening. The disk shares no pixels with the source.
    C2Disk,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::C2Disk => "c2disk",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "c2disk" => Ok(Preset::C2Disk),
            other => Err(Error::InvalidParameter(format!("unknown preset {other:?}"))),
        }
    }

    /// Shapes of the source and target on a `size x size` grid. Dimensions
    /// are given for 200 pixels and scale linearly.
    pub fn shapes(&self, size: usize) -> (Vec<ShapeSpec>, Vec<ShapeSpec>) {
        let s = size as f64 / 200.0;
        let c = (size as f64 - 1.0) / 2.0;
        let blur = 2.0 * s;
        match self {
            Preset::C2Disk => {
                let source = ShapeSpec::c_shape((c, c - 20.0 * s), 35.0 * s, 60.0 * s, 70.0, 1.0)
                    .with_smoothing(blur);
                let target_c = ShapeSpec::c_shape((c, c - 20.0 * s), 22.0 * s, 62.0 * s, 40.0, 1.0)
                    .with_smoothing(blur);
                let disk = ShapeSpec::disk((c, c + 62.0 * s), 15.0 * s, 1.0).with_smoothing(blur);
                (vec![source], vec![target_c, disk])
            }
        }
    }

    pub fn render(&self, size: usize) -> Result<(ScalarField, ScalarField)> {
        let g = GridGeometry::new(size, size)?;
        let (src, tgt) = self.shapes(size);
        Ok((render_scene(&src, g)?, render_scene(&tgt, g)?))
    }
}
