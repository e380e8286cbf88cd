//! Pseudo-spectral discretization of Cauchy–Born fields on the unit torus.
//!
//! Grid functions are stored component-major (`[i * P + p]` for `P = n^d`
//! points); gradients and stresses point-major (`[(p * d + i) * d + a]`).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::{fftn, frequency, grid_coords, FourierField};
use crate::stress::CbModel;

/// Uniform periodic grid with `n` points per axis on `[0, 1)^d`.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    n: usize,
    dim: usize,
}

impl SpectralGrid {
    pub fn new(n: usize, dim: usize) -> Result<Self> {
        if n < 4 || !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("invalid spectral grid n = {n}, d = {dim}")));
        }
        Ok(Self { n, dim })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Cell volume `h^d`.
    pub fn weight(&self) -> f64 {
        (1.0 / self.n as f64).powi(self.dim as i32)
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        let c = grid_coords(p, self.n, self.dim);
        (0..self.dim).map(|a| c[a] as f64 / self.n as f64).collect()
    }

    /// `true` for the mean and (even `n`) Nyquist bins, which carry no gradient.
    fn is_null_bin(&self, idx: usize) -> bool {
        let c = grid_coords(idx, self.n, self.dim);
        let nyq = self.n % 2 == 0 && (0..self.dim).any(|a| c[a] == self.n / 2);
        nyq || (0..self.dim).all(|a| c[a] == 0)
    }

    fn wave(&self, idx: usize) -> [f64; 3] {
        let c = grid_coords(idx, self.n, self.dim);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = 2.0 * std::f64::consts::PI * frequency(c[a], self.n) as f64;
        }
        k
    }

    fn forward(&self, v: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fftn(&mut c, self.n, self.dim, false);
        c
    }

    fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        fftn(&mut c, self.n, self.dim, true);
        c.into_iter().map(|z| z.re).collect()
    }

    /// Samples a closed-form field (component-major).
    pub fn sample(&self, f: &FourierField) -> Vec<f64> {
        f.sample_grid(self.n).concat()
    }

    /// Removes the mean and Nyquist content of every component.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let pts = self.points();
        (0..self.dim)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut c = self.forward(&u[i * pts..(i + 1) * pts]);
                for (idx, z) in c.iter_mut().enumerate() {
                    if self.is_null_bin(idx) {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
                self.inverse(c)
            })
            .collect()
    }

    /// Spectral gradient, point-major `[(p * d + i) * d + a]`.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let pts = self.points();
        let parts: Vec<Vec<f64>> = (0..d * d)
            .into_par_iter()
            .map(|ia| {
                let (i, a) = (ia / d, ia % d);
                let mut c = self.forward(&u[i * pts..(i + 1) * pts]);
                for (idx, z) in c.iter_mut().enumerate() {
                    *z = if self.is_null_bin(idx) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        *z * Complex64::new(0.0, self.wave(idx)[a])
                    };
                }
                self.inverse(c)
            })
            .collect();
        let mut out = vec![0.0; pts * d * d];
        for (ia, part) in parts.iter().enumerate() {
            for p in 0..pts {
                out[p * d * d + ia] = part[p];
            }
        }
        out
    }

    /// Spectral divergence of a point-major tensor field, component-major
    /// result `(div S)_i = Σ_a ∂_a S_{ia}`.
    pub fn divergence(&self, s: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let pts = self.points();
        (0..d)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut acc = vec![Complex64::new(0.0, 0.0); pts];
                for a in 0..d {
                    let comp: Vec<f64> = (0..pts).map(|p| s[(p * d + i) * d + a]).collect();
                    let c = self.forward(&comp);
                    for (idx, (z, acc)) in c.iter().zip(acc.iter_mut()).enumerate() {
                        if !self.is_null_bin(idx) {
                            *acc += *z * Complex64::new(0.0, self.wave(idx)[a]);
                        }
                    }
                }
                self.inverse(acc)
            })
            .collect()
    }

    /// `sqrt(h^d Σ |v|²)`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        (self.weight() * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    /// Fourier coefficients of every component, normalized so that
    /// `u(X) = Σ_m c_m e^{2πi m·X}`.
    pub fn spectrum(&self, u: &[f64]) -> Vec<Vec<Complex64>> {
        let pts = self.points();
        (0..self.dim)
            .map(|i| {
                let s = 1.0 / pts as f64;
                self.forward(&u[i * pts..(i + 1) * pts])
                    .into_iter()
                    .map(|z| z * s)
                    .collect()
            })
            .collect()
    }

    /// Evaluates the trigonometric interpolant of `u`, with every mode
    /// multiplied by `factor(m)`, at the points `j / cells` of a finer or
    /// coarser uniform grid. Exact sampling: modes fold onto the target
    /// grid by aliasing. Nyquist bins are dropped.
    pub fn resample(&self, u: &[f64], cells: usize, factor: impl Fn(&[i64]) -> f64) -> Vec<f64> {
        let d = self.dim;
        let target = cells.pow(d as u32);
        let spec = self.spectrum(u);
        let mut out = Vec::with_capacity(d * target);
        for comp in spec {
            let mut c = vec![Complex64::new(0.0, 0.0); target];
            for (idx, z) in comp.iter().enumerate() {
                let g = grid_coords(idx, self.n, d);
                if self.n % 2 == 0 && (0..d).any(|a| g[a] == self.n / 2) {
                    continue;
                }
                let m: Vec<i64> = (0..d).map(|a| frequency(g[a], self.n)).collect();
                let mut t = 0usize;
                for a in 0..d {
                    t = t * cells + m[a].rem_euclid(cells as i64) as usize;
                }
                c[t] += *z * factor(&m) * target as f64;
            }
            fftn(&mut c, cells, d, true);
            out.extend(c.into_iter().map(|z| z.re));
        }
        out
    }
}

/// Cauchy–Born energy, stress and moduli evaluated pointwise on a grid.
pub struct CbGrid<'a> {
    pub model: &'a CbModel,
    pub grid: &'a SpectralGrid,
}

impl CbGrid<'_> {
    fn matrix(&self, grad: &[f64], p: usize) -> DMatrix<f64> {
        let d = self.grid.dim();
        DMatrix::from_row_slice(d, d, &grad[p * d * d..(p + 1) * d * d])
    }

    /// `h^d Σ_p W(∇U(p))`.
    pub fn energy(&self, grad: &[f64]) -> Result<f64> {
        let per: Vec<f64> = (0..self.grid.points())
            .into_par_iter()
            .map(|p| self.model.energy_density(&self.matrix(grad, p)))
            .collect::<Result<_>>()?;
        Ok(self.grid.weight() * crate::potentials::pairwise_sum(&per))
    }

    /// `S^c(∇U(p))`, point-major.
    pub fn stress(&self, grad: &[f64]) -> Result<Vec<f64>> {
        let d = self.grid.dim();
        let per: Vec<Vec<f64>> = (0..self.grid.points())
            .into_par_iter()
            .map(|p| {
                let s = self.model.stress(&self.matrix(grad, p))?;
                Ok((0..d * d).map(|k| s[(k / d, k % d)]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(per.concat())
    }

    /// `ℂ(∇U(p))` as `d² × d²` row-major blocks, point-major.
    pub fn moduli(&self, grad: &[f64]) -> Result<Vec<f64>> {
        let per: Vec<Vec<f64>> = (0..self.grid.points())
            .into_par_iter()
            .map(|p| {
                let c = self.model.moduli(&self.matrix(grad, p))?;
                let m = c.matrix();
                let k = m.nrows();
                Ok((0..k * k).map(|j| m[(j / k, j % k)]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(per.concat())
    }

    /// `-div(ℂ : ∇V)` for frozen moduli.
    pub fn linearized(&self, moduli: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let dd = d * d;
        let gv = self.grid.gradient(v);
        let pts = self.grid.points();
        let mut s = vec![0.0; pts * dd];
        s.par_chunks_mut(dd).enumerate().for_each(|(p, sp)| {
            let c = &moduli[p * dd * dd..(p + 1) * dd * dd];
            let g = &gv[p * dd..(p + 1) * dd];
            for r in 0..dd {
                sp[r] = (0..dd).map(|col| c[r * dd + col] * g[col]).sum();
            }
        });
        self.grid.divergence(&s).into_iter().map(|x| -x).collect()
    }

    /// Largest Frobenius norm of the gradient over the grid.
    pub fn max_gradient(&self, grad: &[f64]) -> f64 {
        let dd = self.grid.dim() * self.grid.dim();
        grad.chunks(dd)
            .map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Inverse of the constant-coefficient operator `-div(ℂ₀ : ∇·)`, applied
/// spectrally; mean and Nyquist content is annihilated.
pub struct SpectralPreconditioner {
    grid: SpectralGrid,
    inverses: Vec<Option<DMatrix<f64>>>,
}

impl SpectralPreconditioner {
    pub fn new(grid: &SpectralGrid, moduli: &crate::stress::Moduli) -> Self {
        let d = grid.dim();
        let inverses = (0..grid.points())
            .map(|idx| {
                if grid.is_null_bin(idx) {
                    return None;
                }
                let k = grid.wave(idx);
                let a = moduli.acoustic(&k[..d]);
                a.try_inverse().filter(|m| m.iter().all(|v| v.is_finite()))
            })
            .collect();
        Self {
            grid: grid.clone(),
            inverses,
        }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let pts = self.grid.points();
        let spec: Vec<Vec<Complex64>> = (0..d).map(|i| self.grid.forward(&r[i * pts..(i + 1) * pts])).collect();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); pts]; d];
        for idx in 0..pts {
            if let Some(inv) = &self.inverses[idx] {
                for i in 0..d {
                    let mut z = Complex64::new(0.0, 0.0);
                    for j in 0..d {
                        z += spec[j][idx] * inv[(i, j)];
                    }
                    out[i][idx] = z;
                }
            }
        }
        out.into_iter().flat_map(|c| self.grid.inverse(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierMode;

    #[test]
    fn gradient_and_divergence_are_adjoint() {
        let g = SpectralGrid::new(16, 2).unwrap();
        let f = FourierField::new(
            2,
            vec![FourierMode { wave: vec![1, -2], cos: vec![0.3, 0.1], sin: vec![0.0, 0.2] }],
        )
        .unwrap();
        let u = g.sample(&f);
        let grad = g.gradient(&u);
        for p in [0, 17, 100] {
            let exact = f.gradient(&g.coords(p));
            for k in 0..4 {
                assert!((grad[p * 4 + k] - exact[k]).abs() < 1e-12);
            }
        }
        // ⟨div S, u⟩ = -⟨S, ∇u⟩
        let s: Vec<f64> = (0..grad.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let lhs: f64 = g.divergence(&s).iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = s.iter().zip(&grad).map(|(a, b)| a * b).sum();
        assert!((lhs + rhs).abs() < 1e-11);
    }

    #[test]
    fn resample_is_exact_for_band_limited_fields() {
        let g = SpectralGrid::new(16, 1).unwrap();
        let f = FourierField::sine(vec![3], vec![1.0], 0.7);
        let u = g.sample(&f);
        for cells in [8, 20, 64] {
            let r = g.resample(&u, cells, |_| 1.0);
            for (j, v) in r.iter().enumerate() {
                let exact = f.value(&[j as f64 / cells as f64])[0];
                assert!((v - exact).abs() < 1e-13, "cells {cells}");
            }
        }
    }
}
