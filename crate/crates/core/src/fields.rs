//! Grid fields over the image domain and the discrete operators acting on
//! them.
//!
//! Coordinates are pixel indices with unit spacing. Axis 0 is the row index
//! `i` (height), axis 1 the column index `j` (width); vector components are
//! stored in the same order. Values live in row-major order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridGeometry {
    height: usize,
    width: usize,
}

impl GridGeometry {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidGeometry { height, width });
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Grid spacing along both axes, in pixel units.
    pub fn spacing(&self) -> f64 {
        1.0
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    pub fn transposed(&self) -> Self {
        Self {
            height: self.width,
            width: self.height,
        }
    }

    /// Fails with [`Error::GeometryMismatch`] unless `other` equals `self`.
    pub fn ensure_same(&self, other: &GridGeometry) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch {
                expected: *self,
                found: *other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for GridGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

fn check_len(geometry: GridGeometry, values: &[f64]) -> Result<()> {
    if values.len() != geometry.len() {
        return Err(Error::ShapeMismatch {
            geometry,
            len: values.len(),
        });
    }
    Ok(())
}

/// A real value per pixel: an image, a target, or a momentum map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        check_len(geometry, &values)?;
        check_finite(&values, "scalar field")?;
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        Self::constant(geometry, 0.0)
    }

    pub fn constant(geometry: GridGeometry, value: f64) -> Self {
        assert!(value.is_finite(), "constant field value must be finite");
        Self {
            geometry,
            values: vec![value; geometry.len()],
        }
    }

    /// Builds a field from `f(i, j)`. Panics if `f` returns a non-finite value.
    pub fn from_fn(geometry: GridGeometry, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(geometry.len());
        for i in 0..geometry.height {
            for j in 0..geometry.width {
                values.push(f(i, j));
            }
        }
        assert!(
            values.iter().all(|v| v.is_finite()),
            "from_fn produced a non-finite value"
        );
        Self { geometry, values }
    }

    /// Wraps values produced by internal kernels. Finiteness is the caller's
    /// responsibility (the integrator guards it step by step).
    pub(crate) fn from_raw(geometry: GridGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        Self { geometry, values }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.geometry.index(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        let w = self.geometry.width;
        par::sum_rows(self.geometry.height, |i| {
            self.values[i * w..(i + 1) * w].iter().sum()
        })
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &ScalarField) -> Result<ScalarField> {
        self.geometry.ensure_same(&other.geometry)?;
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        ScalarField::new(self.geometry, values)
    }

    pub fn scaled(&self, factor: f64) -> Result<ScalarField> {
        ScalarField::new(self.geometry, self.values.iter().map(|v| v * factor).collect())
    }

    /// Swaps the two axes.
    pub fn transposed(&self) -> ScalarField {
        let g = self.geometry;
        let t = g.transposed();
        let mut values = vec![0.0; g.len()];
        for i in 0..g.height {
            for j in 0..g.width {
                values[t.index(j, i)] = self.values[g.index(i, j)];
            }
        }
        ScalarField::from_raw(t, values)
    }

    /// Total variation: sum of absolute forward differences along both axes.
    pub fn total_variation(&self) -> f64 {
        let (h, w) = (self.geometry.height, self.geometry.width);
        let v = &self.values;
        par::sum_rows(h, |i| {
            let mut acc = 0.0;
            for j in 0..w {
                let c = v[i * w + j];
                if j + 1 < w {
                    acc += (v[i * w + j + 1] - c).abs();
                }
                if i + 1 < h {
                    acc += (v[(i + 1) * w + j] - c).abs();
                }
            }
            acc
        })
    }
}

/// Two real components per pixel: a velocity, an image gradient, or a
/// momentum vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    geometry: GridGeometry,
    components: [Vec<f64>; 2],
}

impl VectorField {
    pub fn new(geometry: GridGeometry, axis0: Vec<f64>, axis1: Vec<f64>) -> Result<Self> {
        check_len(geometry, &axis0)?;
        check_len(geometry, &axis1)?;
        check_finite(&axis0, "vector field axis 0")?;
        check_finite(&axis1, "vector field axis 1")?;
        Ok(Self {
            geometry,
            components: [axis0, axis1],
        })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        Self::constant(geometry, [0.0, 0.0])
    }

    pub fn constant(geometry: GridGeometry, value: [f64; 2]) -> Self {
        assert!(value.iter().all(|v| v.is_finite()));
        Self {
            geometry,
            components: [vec![value[0]; geometry.len()], vec![value[1]; geometry.len()]],
        }
    }

    /// Builds a field from `f(i, j) = [axis0, axis1]`.
    pub fn from_fn(geometry: GridGeometry, f: impl Fn(usize, usize) -> [f64; 2]) -> Self {
        let mut a = Vec::with_capacity(geometry.len());
        let mut b = Vec::with_capacity(geometry.len());
        for i in 0..geometry.height {
            for j in 0..geometry.width {
                let [x, y] = f(i, j);
                a.push(x);
                b.push(y);
            }
        }
        Self::new(geometry, a, b).expect("from_fn produced a non-finite value")
    }

    pub(crate) fn from_raw(geometry: GridGeometry, axis0: Vec<f64>, axis1: Vec<f64>) -> Self {
        debug_assert_eq!(axis0.len(), geometry.len());
        debug_assert_eq!(axis1.len(), geometry.len());
        Self {
            geometry,
            components: [axis0, axis1],
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    /// Component along `axis` (0 = rows, 1 = columns).
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn component_field(&self, axis: usize) -> ScalarField {
        ScalarField::from_raw(self.geometry, self.components[axis].clone())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        let k = self.geometry.index(i, j);
        [self.components[0][k], self.components[1][k]]
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.components[0]).max(max_abs(&self.components[1]))
    }

    /// Largest Euclidean norm over all pixels.
    pub fn max_norm(&self) -> f64 {
        self.components[0]
            .iter()
            .zip(&self.components[1])
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }
}

/// Sample positions, one per pixel, in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    geometry: GridGeometry,
    coords: [Vec<f64>; 2],
}

impl SampleGrid {
    pub fn identity(geometry: GridGeometry) -> Self {
        let w = geometry.width;
        let a = (0..geometry.len()).map(|k| (k / w) as f64).collect();
        let b = (0..geometry.len()).map(|k| (k % w) as f64).collect();
        Self {
            geometry,
            coords: [a, b],
        }
    }

    pub fn new(geometry: GridGeometry, axis0: Vec<f64>, axis1: Vec<f64>) -> Result<Self> {
        check_len(geometry, &axis0)?;
        check_len(geometry, &axis1)?;
        check_finite(&axis0, "sample grid axis 0")?;
        check_finite(&axis1, "sample grid axis 1")?;
        Ok(Self {
            geometry,
            coords: [axis0, axis1],
        })
    }

    /// `Id + scale * v`: the identity grid displaced by a vector field.
    pub fn displaced(v: &VectorField, scale: f64) -> Result<Self> {
        let raw = foot_points(v.geometry, &v.components, scale);
        check_finite(&raw[0], "sample grid axis 0")?;
        check_finite(&raw[1], "sample grid axis 1")?;
        Ok(Self {
            geometry: v.geometry,
            coords: raw,
        })
    }

    pub(crate) fn from_raw(geometry: GridGeometry, coords: [Vec<f64>; 2]) -> Self {
        Self { geometry, coords }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        let k = self.geometry.index(i, j);
        [self.coords[0][k], self.coords[1][k]]
    }

    /// Largest distance between a sample position and its pixel.
    pub fn max_displacement(&self) -> f64 {
        let w = self.geometry.width;
        (0..self.geometry.len())
            .map(|k| (self.coords[0][k] - (k / w) as f64).hypot(self.coords[1][k] - (k % w) as f64))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| {
        // NaN must win so guards notice it
        if v.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(v.abs())
        }
    })
}

/// `Id + scale * v` on raw component buffers.
pub(crate) fn foot_points(geometry: GridGeometry, v: &[Vec<f64>; 2], scale: f64) -> [Vec<f64>; 2] {
    let w = geometry.width;
    let mut a = vec![0.0; geometry.len()];
    let mut b = vec![0.0; geometry.len()];
    par::for_each_row2(&mut a, &mut b, w, |i, ra, rb| {
        let off = i * w;
        for j in 0..w {
            ra[j] = i as f64 + scale * v[0][off + j];
            rb[j] = j as f64 + scale * v[1][off + j];
        }
    });
    [a, b]
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Stencil of the derivative at position `i` of a line of length `n`:
/// central interior, one-sided at both ends. Returns `(plus, minus, scale)`.
#[inline]
fn diff_stencil(i: usize, n: usize) -> (usize, usize, f64) {
    if i == 0 {
        (1, 0, 1.0)
    } else if i == n - 1 {
        (n - 1, n - 2, 1.0)
    } else {
        (i + 1, i - 1, 0.5)
    }
}

/// Transposed stencil: the `(index, coefficient)` terms whose weighted sum of
/// the derivative output gives the adjoint at position `t`.
#[inline]
fn diff_adjoint_terms(t: usize, n: usize) -> ([(usize, f64); 4], usize) {
    let mut terms = [(0usize, 0.0f64); 4];
    let mut len = 0;
    let mut push = |i: usize, c: f64| {
        terms[len] = (i, c);
        len += 1;
    };
    // interior rows i = t - 1 and i = t + 1 read position t
    if t >= 2 && t - 1 <= n - 2 {
        push(t - 1, 0.5);
    }
    if t + 2 < n {
        push(t + 1, -0.5);
    }
    if t == 0 {
        push(0, -1.0);
    }
    if t == 1 {
        push(0, 1.0);
    }
    if t == n - 1 {
        push(n - 1, 1.0);
    }
    if t == n - 2 {
        push(n - 1, -1.0);
    }
    (terms, len)
}

/// Derivative along axis 0 (rows).
pub(crate) fn diff_axis0(src: &[f64], g: GridGeometry, out: &mut [f64]) {
    let (h, w) = (g.height, g.width);
    par::for_each_row(out, w, |i, row| {
        let (p, m, scale) = diff_stencil(i, h);
        let (rp, rm) = (&src[p * w..(p + 1) * w], &src[m * w..(m + 1) * w]);
        if scale == 1.0 {
            for j in 0..w {
                row[j] = rp[j] - rm[j];
            }
        } else {
            for j in 0..w {
                row[j] = (rp[j] - rm[j]) * 0.5;
            }
        }
    });
}

/// Derivative along axis 1 (columns).
pub(crate) fn diff_axis1(src: &[f64], g: GridGeometry, out: &mut [f64]) {
    let w = g.width;
    par::for_each_row(out, w, |i, row| {
        let line = &src[i * w..(i + 1) * w];
        for (j, o) in row.iter_mut().enumerate() {
            let (p, m, scale) = diff_stencil(j, w);
            *o = if scale == 1.0 {
                line[p] - line[m]
            } else {
                (line[p] - line[m]) * 0.5
            };
        }
    });
}

pub(crate) fn diff_axis0_adjoint(src: &[f64], g: GridGeometry, out: &mut [f64]) {
    let (h, w) = (g.height, g.width);
    par::for_each_row(out, w, |t, row| {
        row.iter_mut().for_each(|x| *x = 0.0);
        let (terms, len) = diff_adjoint_terms(t, h);
        for &(i, c) in &terms[..len] {
            let r = &src[i * w..(i + 1) * w];
            for j in 0..w {
                row[j] += c * r[j];
            }
        }
    });
}

pub(crate) fn diff_axis1_adjoint(src: &[f64], g: GridGeometry, out: &mut [f64]) {
    let w = g.width;
    par::for_each_row(out, w, |i, row| {
        let line = &src[i * w..(i + 1) * w];
        for (t, o) in row.iter_mut().enumerate() {
            let (terms, len) = diff_adjoint_terms(t, w);
            *o = terms[..len].iter().map(|&(k, c)| c * line[k]).sum();
        }
    });
}

pub(crate) fn gradient_raw(src: &[f64], g: GridGeometry) -> [Vec<f64>; 2] {
    let mut a = vec![0.0; g.len()];
    let mut b = vec![0.0; g.len()];
    diff_axis0(src, g, &mut a);
    diff_axis1(src, g, &mut b);
    [a, b]
}

pub(crate) fn divergence_raw(v: &[Vec<f64>; 2], g: GridGeometry) -> Vec<f64> {
    let mut a = vec![0.0; g.len()];
    let mut b = vec![0.0; g.len()];
    diff_axis0(&v[0], g, &mut a);
    diff_axis1(&v[1], g, &mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    a
}

/// Adjoint of [`gradient_raw`]: maps a vector cotangent to a scalar one.
pub(crate) fn gradient_adjoint_raw(v: &[Vec<f64>; 2], g: GridGeometry) -> Vec<f64> {
    let mut a = vec![0.0; g.len()];
    let mut b = vec![0.0; g.len()];
    diff_axis0_adjoint(&v[0], g, &mut a);
    diff_axis1_adjoint(&v[1], g, &mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    a
}

/// Adjoint of [`divergence_raw`].
pub(crate) fn divergence_adjoint_raw(s: &[f64], g: GridGeometry) -> [Vec<f64>; 2] {
    let mut a = vec![0.0; g.len()];
    let mut b = vec![0.0; g.len()];
    diff_axis0_adjoint(s, g, &mut a);
    diff_axis1_adjoint(s, g, &mut b);
    [a, b]
}

/// Central differences in the interior, one-sided differences on the
/// boundary rows and columns.
pub fn gradient(f: &ScalarField) -> VectorField {
    let [a, b] = gradient_raw(&f.values, f.geometry);
    VectorField::from_raw(f.geometry, a, b)
}

/// Sum over axes of the derivative of each component along its own axis,
/// using the same stencil as [`gradient`].
pub fn divergence(v: &VectorField) -> ScalarField {
    ScalarField::from_raw(v.geometry, divergence_raw(&v.components, v.geometry))
}

// ---------------------------------------------------------------------------
// Bilinear interpolation
// ---------------------------------------------------------------------------

/// Clamps `x` into `[0, n-1]` and splits it into a cell index and fraction.
/// The cell index never exceeds `n - 2`, so the last node is reached with
/// fraction 1.
#[inline]
fn locate(x: f64, n: usize) -> (usize, f64, bool) {
    let hi = (n - 1) as f64;
    let saturated = !(0.0..=hi).contains(&x);
    let x = x.clamp(0.0, hi);
    let cell = (x as usize).min(n - 2);
    (cell, x - cell as f64, saturated)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // exact at t = 0 and t = 1; the clamp keeps rounding inside the hull
    let v = (1.0 - t) * a + t * b;
    v.clamp(a.min(b), a.max(b))
}

#[inline]
pub(crate) fn sample(values: &[f64], g: GridGeometry, x: f64, y: f64) -> f64 {
    let w = g.width;
    let (i0, fx, _) = locate(x, g.height);
    let (j0, fy, _) = locate(y, w);
    let r0 = i0 * w + j0;
    let r1 = r0 + w;
    let a = lerp(values[r0], values[r0 + 1], fy);
    let b = lerp(values[r1], values[r1 + 1], fy);
    lerp(a, b, fx)
}

/// Partial derivatives of [`sample`] with respect to the two coordinates.
///
/// Saturated (clamped) coordinates have derivative 0. Exactly on an interior
/// node the two one-sided slopes differ; their average is used.
#[inline]
pub(crate) fn sample_coord_grad(values: &[f64], g: GridGeometry, x: f64, y: f64) -> [f64; 2] {
    let (h, w) = (g.height, g.width);
    let (i0, fx, sx) = locate(x, h);
    let (j0, fy, sy) = locate(y, w);
    let at = |i: usize, j: usize| values[i * w + j];
    let row = |i: usize| (1.0 - fy) * at(i, j0) + fy * at(i, j0 + 1);
    let col = |j: usize| (1.0 - fx) * at(i0, j) + fx * at(i0 + 1, j);
    let dx = if sx {
        0.0
    } else if fx == 0.0 && i0 > 0 {
        0.5 * (row(i0 + 1) - row(i0 - 1))
    } else {
        row(i0 + 1) - row(i0)
    };
    let dy = if sy {
        0.0
    } else if fy == 0.0 && j0 > 0 {
        0.5 * (col(j0 + 1) - col(j0 - 1))
    } else {
        col(j0 + 1) - col(j0)
    };
    [dx, dy]
}

/// Scatters `weight` onto the four nodes that [`sample`] reads at `(x, y)`.
#[inline]
pub(crate) fn sample_scatter(out: &mut [f64], g: GridGeometry, x: f64, y: f64, weight: f64) {
    let w = g.width;
    let (i0, fx, _) = locate(x, g.height);
    let (j0, fy, _) = locate(y, w);
    let r0 = i0 * w + j0;
    let r1 = r0 + w;
    out[r0] += weight * (1.0 - fx) * (1.0 - fy);
    out[r0 + 1] += weight * (1.0 - fx) * fy;
    out[r1] += weight * fx * (1.0 - fy);
    out[r1 + 1] += weight * fx * fy;
}

pub(crate) fn interpolate_raw(values: &[f64], g: GridGeometry, at: &[Vec<f64>; 2]) -> Vec<f64> {
    let w = g.width;
    let mut out = vec![0.0; g.len()];
    par::for_each_row(&mut out, w, |i, row| {
        let off = i * w;
        for (j, o) in row.iter_mut().enumerate() {
            *o = sample(values, g, at[0][off + j], at[1][off + j]);
        }
    });
    out
}

/// Adjoint of [`interpolate_raw`] with respect to the sampled values.
pub(crate) fn interpolate_adjoint_values(
    cotangent: &[f64],
    g: GridGeometry,
    at: &[Vec<f64>; 2],
) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    for k in 0..g.len() {
        let c = cotangent[k];
        if c != 0.0 {
            sample_scatter(&mut out, g, at[0][k], at[1][k], c);
        }
    }
    out
}

/// Bilinear interpolation of `f` at every position of `at`. Positions outside
/// the grid are clamped to the border first.
pub fn interpolate(f: &ScalarField, at: &SampleGrid) -> Result<ScalarField> {
    f.geometry.ensure_same(&at.geometry)?;
    Ok(ScalarField::from_raw(
        f.geometry,
        interpolate_raw(&f.values, f.geometry, &at.coords),
    ))
}

/// Componentwise [`interpolate`].
pub fn interpolate_vec(v: &VectorField, at: &SampleGrid) -> Result<VectorField> {
    v.geometry.ensure_same(&at.geometry)?;
    let (a, b) = par::join(
        || interpolate_raw(&v.components[0], v.geometry, &at.coords),
        || interpolate_raw(&v.components[1], v.geometry, &at.coords),
    );
    Ok(VectorField::from_raw(v.geometry, a, b))
}

/// Composes a pullback grid with a per-step foot grid: `phi ∘ foot`.
pub(crate) fn compose_grid(phi: &SampleGrid, foot: &[Vec<f64>; 2]) -> SampleGrid {
    let g = phi.geometry;
    SampleGrid::from_raw(
        g,
        [
            interpolate_raw(&phi.coords[0], g, foot),
            interpolate_raw(&phi.coords[1], g, foot),
        ],
    )
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

pub(crate) fn dot_raw(a: &[f64], b: &[f64], w: usize) -> f64 {
    let rows = a.len() / w;
    par::sum_rows(rows, |i| {
        let s = i * w..(i + 1) * w;
        a[s.clone()].iter().zip(&b[s]).map(|(x, y)| x * y).sum()
    })
}

pub(crate) fn ssd_raw(a: &[f64], b: &[f64], w: usize) -> f64 {
    let rows = a.len() / w;
    0.5 * par::sum_rows(rows, |i| {
        let s = i * w..(i + 1) * w;
        a[s.clone()]
            .iter()
            .zip(&b[s])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
    })
}

/// Sum over pixels of `f * g`.
pub fn dot(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.geometry.ensure_same(&g.geometry)?;
    Ok(dot_raw(&f.values, &g.values, f.geometry.width))
}

/// Half the sum of squared differences.
pub fn ssd(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.geometry.ensure_same(&g.geometry)?;
    Ok(ssd_raw(&f.values, &g.values, f.geometry.width))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(h: usize, w: usize) -> GridGeometry {
        GridGeometry::new(h, w).unwrap()
    }

    #[test]
    fn geometry_rejects_degenerate_axes() {
        assert!(GridGeometry::new(1, 5).is_err());
        assert!(GridGeometry::new(5, 1).is_err());
        assert_eq!(geom(2, 2).spacing(), 1.0);
    }

    #[test]
    fn field_constructor_rejects_non_finite_and_bad_length() {
        let g = geom(2, 2);
        assert!(matches!(
            ScalarField::new(g, vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            ScalarField::new(g, vec![0.0; 3]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(SampleGrid::new(g, vec![0.0; 4], vec![0.0, 0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn ramp_gradient_is_exact_in_interior() {
        let g = geom(6, 7);
        let f = ScalarField::from_fn(g, |_, j| j as f64);
        let grad = gradient(&f);
        for i in 0..6 {
            for j in 0..7 {
                assert_eq!(grad.get(i, j), [0.0, 1.0]);
            }
        }
    }

    #[test]
    fn constant_gradient_is_zero_everywhere() {
        let f = ScalarField::constant(geom(5, 4), 3.25);
        assert_eq!(gradient(&f), VectorField::zeros(geom(5, 4)));
    }

    #[test]
    fn squared_rows_match_stencil_by_hand() {
        // interior: ((i+1)^2 - (i-1)^2) / 2 = 2i; row 0: 1 - 0; row 7: 49 - 36
        let f = ScalarField::from_fn(geom(8, 8), |i, _| (i * i) as f64);
        let grad = gradient(&f);
        for j in 0..8 {
            assert_eq!(grad.get(0, j)[0], 1.0);
            assert_eq!(grad.get(7, j)[0], 13.0);
            for i in 1..7 {
                assert_eq!(grad.get(i, j)[0], 2.0 * i as f64);
            }
        }
    }

    #[test]
    fn divergence_of_linear_fields() {
        let g = geom(8, 8);
        let v = VectorField::from_fn(g, |i, j| [i as f64, j as f64]);
        let d = divergence(&v);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(d.get(i, j), 2.0);
            }
        }
        let c = VectorField::constant(g, [1.5, -2.0]);
        assert_eq!(divergence(&c), ScalarField::zeros(g));

        let shear = VectorField::from_fn(g, |i, j| [(i * j) as f64, 0.0]);
        let d = divergence(&shear);
        for i in 1..7 {
            for j in 0..8 {
                assert_eq!(d.get(i, j), j as f64);
            }
        }
    }

    #[test]
    fn adjoint_stencils_are_transposes() {
        for &(h, w) in &[(2usize, 2usize), (3, 5), (6, 4), (9, 9)] {
            let g = geom(h, w);
            let n = g.len();
            // column k of D is D e_k; D^T e_k is row k of D
            let mut fwd = vec![vec![0.0; n]; n];
            let mut adj = vec![vec![0.0; n]; n];
            for axis in 0..2 {
                for k in 0..n {
                    let mut e = vec![0.0; n];
                    e[k] = 1.0;
                    let mut out = vec![0.0; n];
                    if axis == 0 {
                        diff_axis0(&e, g, &mut out);
                    } else {
                        diff_axis1(&e, g, &mut out);
                    }
                    for r in 0..n {
                        fwd[r][k] = out[r];
                    }
                    if axis == 0 {
                        diff_axis0_adjoint(&e, g, &mut out);
                    } else {
                        diff_axis1_adjoint(&e, g, &mut out);
                    }
                    adj[k] = out.clone();
                }
                for r in 0..n {
                    for c in 0..n {
                        assert_eq!(fwd[r][c], adj[r][c], "axis {axis} {h}x{w} at ({r},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn identity_grid_interpolation_is_exact() {
        let g = geom(5, 6);
        let f = ScalarField::from_fn(g, |i, j| ((i * 7 + j * 3) as f64).sin() * 1e3 + 0.1);
        let out = interpolate(&f, &SampleGrid::identity(g)).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn half_pixel_shift_of_ramp_is_exact_and_clamped() {
        let g = geom(6, 6);
        let f = ScalarField::from_fn(g, |_, j| j as f64);
        let at = SampleGrid::displaced(&VectorField::constant(g, [0.0, 0.5]), 1.0).unwrap();
        let out = interpolate(&f, &at).unwrap();
        for i in 0..6 {
            for j in 0..5 {
                assert_eq!(out.get(i, j), j as f64 + 0.5);
            }
            assert_eq!(out.get(i, 5), 5.0);
        }
    }

    #[test]
    fn bright_pixel_spreads_quarter_weights() {
        let g = geom(7, 7);
        let f = ScalarField::from_fn(g, |i, j| if (i, j) == (3, 3) { 8.0 } else { 0.0 });
        // each pixel samples half a pixel up-left; the four pixels whose
        // sample squares contain (3, 3) each get 1/4 of the peak
        let at = SampleGrid::displaced(&VectorField::constant(g, [-0.5, -0.5]), 1.0).unwrap();
        let out = interpolate(&f, &at).unwrap();
        let mut expected = vec![0.0; 49];
        for (i, j) in [(3, 3), (3, 4), (4, 3), (4, 4)] {
            expected[i * 7 + j] = 2.0;
        }
        assert_eq!(out.values(), &expected[..]);
    }

    #[test]
    fn interpolate_vec_on_linear_field() {
        let g = geom(6, 5);
        let v = VectorField::from_fn(g, |i, j| [2.0 * i as f64 - j as f64, 0.5 * j as f64 + 1.0]);
        assert_eq!(interpolate_vec(&v, &SampleGrid::identity(g)).unwrap(), v);
        let c = VectorField::constant(g, [0.3, -0.7]);
        let at = SampleGrid::displaced(&VectorField::constant(g, [0.37, -1.2]), 1.0).unwrap();
        let out = interpolate_vec(&c, &at).unwrap();
        assert!(out.component(0).iter().all(|&x| x == 0.3));
        assert!(out.component(1).iter().all(|&x| x == -0.7));
        let half = SampleGrid::displaced(&VectorField::constant(g, [0.5, 0.5]), 1.0).unwrap();
        let out = interpolate_vec(&v, &half).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
                let got = out.get(i, j);
                assert!((got[0] - (2.0 * x - y)).abs() < 1e-14);
                assert!((got[1] - (0.5 * y + 1.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coordinate_gradient_matches_differences_off_nodes() {
        let g = geom(5, 5);
        let f = ScalarField::from_fn(g, |i, j| ((i * i) as f64) * 0.3 + (j as f64 * 1.3).cos());
        let h = 1e-6;
        for &(x, y) in &[(1.3, 2.7), (0.2, 3.9), (3.5, 0.45)] {
            let [dx, dy] = sample_coord_grad(f.values(), g, x, y);
            let fd_x = (sample(f.values(), g, x + h, y) - sample(f.values(), g, x - h, y)) / (2.0 * h);
            let fd_y = (sample(f.values(), g, x, y + h) - sample(f.values(), g, x, y - h)) / (2.0 * h);
            assert!((dx - fd_x).abs() < 1e-8, "{dx} vs {fd_x}");
            assert!((dy - fd_y).abs() < 1e-8, "{dy} vs {fd_y}");
        }
        // clamped coordinates do not move the sample
        assert_eq!(sample_coord_grad(f.values(), g, -0.5, 1.5)[0], 0.0);
        assert_eq!(sample_coord_grad(f.values(), g, 1.5, 4.5)[1], 0.0);
    }

    #[test]
    fn ssd_and_dot_examples() {
        let g = geom(4, 4);
        let ones = ScalarField::constant(g, 1.0);
        let zeros = ScalarField::zeros(g);
        assert_eq!(ssd(&ones, &zeros).unwrap(), 8.0);
        assert_eq!(ssd(&ones, &ones).unwrap(), 0.0);
        assert_eq!(dot(&ones, &ones).unwrap(), 16.0);
        let other = ScalarField::zeros(geom(4, 5));
        assert!(matches!(ssd(&ones, &other), Err(Error::GeometryMismatch { .. })));
    }

    #[test]
    fn total_variation_of_step() {
        let g = geom(3, 4);
        let f = ScalarField::from_fn(g, |_, j| if j >= 2 { 1.0 } else { 0.0 });
        assert_eq!(f.total_variation(), 3.0);
    }
}
