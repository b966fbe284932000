//! Truncated Gaussian reproducing kernel, applied by separable convolution
//! with replicate-border padding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{dot_raw, GridGeometry, ScalarField, VectorField};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl GaussianKernel {
    /// Kernel of width `sigma` (pixels) truncated at `ceil(4 sigma)`.
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel sigma must be positive, got {sigma}"
            )));
        }
        Self::with_radius(sigma, (4.0 * sigma).ceil() as usize)
    }

    pub fn with_radius(sigma: f64, radius: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel sigma must be positive, got {sigma}"
            )));
        }
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|k| {
                let d = k as f64 - radius as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        if raw.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "radius {radius} too large for sigma {sigma}: tail weights underflow"
            )));
        }
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        // exact mirror symmetry
        for k in 0..radius {
            weights[2 * radius - k] = weights[k];
        }
        Ok(Self {
            sigma,
            radius,
            weights,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn smooth_scalar(&self, f: &ScalarField) -> ScalarField {
        ScalarField::from_raw(f.geometry(), self.convolve(f.values(), f.geometry()))
    }

    pub fn smooth_vector(&self, v: &VectorField) -> VectorField {
        let g = v.geometry();
        let (a, b) = par::join(
            || self.convolve(v.component(0), g),
            || self.convolve(v.component(1), g),
        );
        VectorField::from_raw(g, a, b)
    }

    /// `<m, K * m>` summed over both components: the squared RKHS norm of
    /// the velocity generated by the momentum field `m`.
    pub fn v_norm_sq(&self, m: &VectorField) -> f64 {
        let g = m.geometry();
        (0..2)
            .map(|c| dot_raw(m.component(c), &self.convolve(m.component(c), g), g.width()))
            .sum()
    }

    /// Horizontal pass, then vertical pass.
    ///
    /// Each output is written as `f[i] + sum_k w_k (f[n_k] - f[i])`, which
    /// equals the plain weighted sum for normalized weights and leaves
    /// constant fields bit-for-bit unchanged.
    pub(crate) fn convolve(&self, src: &[f64], g: GridGeometry) -> Vec<f64> {
        let (h, w) = (g.height(), g.width());
        let r = self.radius as isize;
        let wts = &self.weights;

        let mut tmp = vec![0.0; g.len()];
        par::for_each_row(&mut tmp, w, |i, row| {
            let line = &src[i * w..(i + 1) * w];
            let last = w as isize - 1;
            for (j, out) in row.iter_mut().enumerate() {
                let c = line[j];
                let mut acc = 0.0;
                let ji = j as isize;
                if ji >= r && ji + r <= last {
                    let base = j - self.radius;
                    for (k, wk) in wts.iter().enumerate() {
                        acc += wk * (line[base + k] - c);
                    }
                } else {
                    for (k, wk) in wts.iter().enumerate() {
                        let t = (ji + k as isize - r).clamp(0, last) as usize;
                        acc += wk * (line[t] - c);
                    }
                }
                *out = c + acc;
            }
        });

        let mut out = vec![0.0; g.len()];
        par::for_each_row(&mut out, w, |i, row| {
            let centre = &tmp[i * w..(i + 1) * w];
            let mut acc = vec![0.0; w];
            let last = h as isize - 1;
            for (k, wk) in wts.iter().enumerate() {
                if k == self.radius {
                    continue;
                }
                let t = (i as isize + k as isize - r).clamp(0, last) as usize;
                let other = &tmp[t * w..(t + 1) * w];
                for j in 0..w {
                    acc[j] += wk * (other[j] - centre[j]);
                }
            }
            for j in 0..w {
                row[j] = centre[j] + acc[j];
            }
        });
        out
    }

    /// Banded matrix of the 1D pass on a line of length `n`: entry `d` of
    /// row `i` is the coefficient of input `i + d - radius`.
    fn band(&self, n: usize) -> Vec<f64> {
        let width = 2 * self.radius + 1;
        let r = self.radius as isize;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            let row = &mut band[i * width..(i + 1) * width];
            row[self.radius] += 1.0;
            for (k, wk) in self.weights.iter().enumerate() {
                if k == self.radius {
                    continue;
                }
                let t = (i as isize + k as isize - r).clamp(0, n as isize - 1);
                row[(t - i as isize + r) as usize] += wk;
                row[self.radius] -= wk;
            }
        }
        band
    }

    /// Transpose of [`convolve`](Self::convolve): vertical adjoint pass,
    /// then horizontal adjoint pass.
    pub(crate) fn convolve_adjoint(&self, src: &[f64], g: GridGeometry) -> Vec<f64> {
        let (h, w) = (g.height(), g.width());
        let width = 2 * self.radius + 1;
        let r = self.radius;

        let band_v = self.band(h);
        let mut tmp = vec![0.0; g.len()];
        par::for_each_row(&mut tmp, w, |t, row| {
            for d in 0..width {
                // input row i = t + r - d contributed to t through entry d
                let Some(i) = (t + r).checked_sub(d) else { continue };
                if i >= h {
                    continue;
                }
                let c = band_v[i * width + d];
                if c == 0.0 {
                    continue;
                }
                let other = &src[i * w..(i + 1) * w];
                for j in 0..w {
                    row[j] += c * other[j];
                }
            }
        });

        let band_h = self.band(w);
        let mut out = vec![0.0; g.len()];
        par::for_each_row(&mut out, w, |i, row| {
            let line = &tmp[i * w..(i + 1) * w];
            for (t, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for d in 0..width {
                    let Some(j) = (t + r).checked_sub(d) else { continue };
                    if j >= w {
                        continue;
                    }
                    acc += band_h[j * width + d] * line[j];
                }
                *o = acc;
            }
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 2D summation with clamped indices.
    fn direct(k: &GaussianKernel, f: &ScalarField) -> Vec<f64> {
        let g = f.geometry();
        let (h, w) = (g.height() as isize, g.width() as isize);
        let r = k.radius() as isize;
        let wts = k.weights();
        let mut out = vec![0.0; g.len()];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for a in -r..=r {
                    for b in -r..=r {
                        let ii = (i + a).clamp(0, h - 1) as usize;
                        let jj = (j + b).clamp(0, w - 1) as usize;
                        acc += wts[(a + r) as usize] * wts[(b + r) as usize] * f.get(ii, jj);
                    }
                }
                out[(i * w + j) as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn weights_are_symmetric_normalized_positive() {
        for sigma in [0.5, 1.0, 2.3, 6.0] {
            let k = GaussianKernel::new(sigma).unwrap();
            let n = k.weights().len();
            assert_eq!(n, 2 * k.radius() + 1);
            assert_eq!(k.radius(), (4.0 * sigma).ceil() as usize);
            for i in 0..n {
                assert_eq!(k.weights()[i], k.weights()[n - 1 - i]);
                assert!(k.weights()[i] > 0.0);
            }
            assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!(GaussianKernel::new(0.0).is_err());
        assert!(GaussianKernel::new(f64::NAN).is_err());
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let g = GridGeometry::new(9, 13).unwrap();
        let k = GaussianKernel::new(2.0).unwrap();
        for c in [0.3, -7.25, 1e5 / 3.0] {
            let f = ScalarField::constant(g, c);
            assert_eq!(k.smooth_scalar(&f), f);
        }
    }

    #[test]
    fn delta_response_is_outer_product_of_weights() {
        let g = GridGeometry::new(31, 31).unwrap();
        let k = GaussianKernel::new(1.5).unwrap();
        let r = k.radius() as isize;
        let f = ScalarField::from_fn(g, |i, j| if (i, j) == (15, 15) { 1.0 } else { 0.0 });
        let out = k.smooth_scalar(&f);
        for a in -r..=r {
            for b in -r..=r {
                let expected = k.weights()[(r + a) as usize] * k.weights()[(r + b) as usize];
                let got = out.get((15 + a) as usize, (15 + b) as usize);
                assert!((got - expected).abs() < 1e-16, "{a},{b}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn separable_pass_matches_direct_summation_with_borders() {
        let g = GridGeometry::new(11, 7).unwrap();
        let k = GaussianKernel::new(1.7).unwrap();
        let f = ScalarField::from_fn(g, |i, j| ((i * 13 + j * 5) % 7) as f64 - 2.5);
        let fast = k.smooth_scalar(&f);
        let slow = direct(&k, &f);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn semigroup_holds_after_truncation() {
        let g = GridGeometry::new(64, 64).unwrap();
        let f = ScalarField::from_fn(g, |i, j| if (i, j) == (32, 32) { 1.0 } else { 0.0 });
        for sigma in [2.0, 3.0] {
            let k = GaussianKernel::new(sigma).unwrap();
            let k2 = GaussianKernel::new(sigma * 2f64.sqrt()).unwrap();
            let twice = direct(&k, &ScalarField::new(g, direct(&k, &f)).unwrap());
            let once = direct(&k2, &f);
            let err = twice
                .iter()
                .zip(&once)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-3, "sigma {sigma}: {err}");
            let fast = k.smooth_scalar(&k.smooth_scalar(&f));
            for (a, b) in fast.values().iter().zip(&twice) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn smooth_vector_is_componentwise() {
        let g = GridGeometry::new(8, 9).unwrap();
        let k = GaussianKernel::new(1.0).unwrap();
        let v = VectorField::from_fn(g, |i, j| [(i as f64).sin(), (j as f64 * 0.7).cos()]);
        let out = k.smooth_vector(&v);
        for c in 0..2 {
            assert_eq!(out.component_field(c), k.smooth_scalar(&v.component_field(c)));
        }
        let c = VectorField::constant(g, [2.0, -1.0]);
        assert_eq!(k.smooth_vector(&c), c);
    }

    #[test]
    fn adjoint_is_exact_transpose() {
        let g = GridGeometry::new(6, 5).unwrap();
        let k = GaussianKernel::new(1.3).unwrap();
        let n = g.len();
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let fwd = k.convolve(&e, g);
            for row in 0..n {
                let mut e2 = vec![0.0; n];
                e2[row] = 1.0;
                let adj = k.convolve_adjoint(&e2, g);
                assert!((fwd[row] - adj[col]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn v_norm_examples() {
        let g = GridGeometry::new(21, 21).unwrap();
        let k = GaussianKernel::new(1.2).unwrap();
        assert_eq!(k.v_norm_sq(&VectorField::zeros(g)), 0.0);
        let spike = VectorField::from_fn(g, |i, j| [0.0, if (i, j) == (10, 10) { 1.0 } else { 0.0 }]);
        let c = k.weights()[k.radius()];
        assert!((k.v_norm_sq(&spike) - c * c).abs() < 1e-16);

        let small = GridGeometry::new(6, 7).unwrap();
        let m = VectorField::from_fn(small, |i, j| [(i as f64 - 2.0) * 0.3, ((i * j) % 3) as f64]);
        let mut expected = 0.0;
        for comp in 0..2 {
            let km = direct(&k, &m.component_field(comp));
            for (a, b) in m.component(comp).iter().zip(&km) {
                expected += a * b;
            }
        }
        assert!((k.v_norm_sq(&m) - expected).abs() < 1e-12 * expected.abs());
    }
}
