//! Periodic grids, n-dimensional FFTs, spectral derivatives and closed-form
//! trigonometric fields on the unit torus.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place n-dimensional FFT of a row-major array with `n` points per axis.
/// The inverse transform is normalized by `1 / n^d`.
pub fn fftn(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(dim as u32));
    let fft = PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    });
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for k in 0..n {
                    line[k] = data[base + k * stride];
                }
                fft.process(&mut line);
                for k in 0..n {
                    data[base + k * stride] = line[k];
                }
            }
        }
    }
    if inverse {
        let s = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Signed integer frequency of FFT bin `k` on an `n`-point axis.
pub fn frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Multi-index of a row-major grid point.
pub fn grid_coords(index: usize, n: usize, dim: usize) -> [usize; 3] {
    let mut c = [0usize; 3];
    let mut rem = index;
    for axis in (0..dim).rev() {
        c[axis] = rem % n;
        rem /= n;
    }
    c
}

/// Spectral partial derivative along `axis` of a real periodic grid function
/// on a torus of side `length`. The Nyquist mode is dropped.
pub fn spectral_derivative(values: &[f64], n: usize, dim: usize, axis: usize, length: f64) -> Vec<f64> {
    let mut c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fftn(&mut c, n, dim, false);
    let scale = 2.0 * PI / length;
    for (idx, v) in c.iter_mut().enumerate() {
        let k = grid_coords(idx, n, dim)[axis];
        if n % 2 == 0 && k == n / 2 {
            *v = Complex64::new(0.0, 0.0);
        } else {
            *v *= Complex64::new(0.0, scale * frequency(k, n) as f64);
        }
    }
    fftn(&mut c, n, dim, true);
    c.iter().map(|v| v.re).collect()
}

/// One term `cos_coef · cos(2π m·X) + sin_coef · sin(2π m·X)` of a
/// vector-valued trigonometric field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub wave: Vec<i64>,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

/// Closed-form smooth periodic field `U : [0,1)^d -> R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField")]
pub struct FourierField {
    pub dim: usize,
    pub modes: Vec<FourierMode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    dim: usize,
    #[serde(default)]
    modes: Vec<FourierMode>,
}

impl TryFrom<RawField> for FourierField {
    type Error = Error;

    fn try_from(raw: RawField) -> Result<Self> {
        Self::new(raw.dim, raw.modes)
    }
}

impl FourierField {
    pub fn new(dim: usize, mut modes: Vec<FourierMode>) -> Result<Self> {
        for m in &mut modes {
            if m.wave.len() != dim {
                return Err(Error::Config(format!(
                    "mode wave vector {:?} has wrong dimension (expected {dim})",
                    m.wave
                )));
            }
            if m.cos.is_empty() {
                m.cos = vec![0.0; dim];
            }
            if m.sin.is_empty() {
                m.sin = vec![0.0; dim];
            }
            if m.cos.len() != dim || m.sin.len() != dim {
                return Err(Error::Config("mode coefficients must have d components".into()));
            }
        }
        Ok(Self { dim, modes })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, modes: Vec::new() }
    }

    /// `amplitude · sin(2π m·X) · direction`.
    pub fn sine(wave: Vec<i64>, direction: Vec<f64>, amplitude: f64) -> Self {
        let dim = wave.len();
        Self {
            dim,
            modes: vec![FourierMode {
                wave,
                cos: vec![0.0; dim],
                sin: direction.iter().map(|v| v * amplitude).collect(),
            }],
        }
    }

    pub fn validated(self) -> Result<Self> {
        Self::new(self.dim, self.modes)
    }

    pub fn is_zero_mean(&self) -> bool {
        self.modes
            .iter()
            .all(|m| m.wave.iter().any(|&w| w != 0) || m.cos.iter().all(|&c| c == 0.0))
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.cos.iter_mut().for_each(|v| *v *= a);
            m.sin.iter_mut().for_each(|v| *v *= a);
        }
        out
    }

    /// Multiplies every mode by `factor(m)`.
    pub fn map_modes(&self, factor: impl Fn(&[i64]) -> f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            let f = factor(&m.wave);
            m.cos.iter_mut().for_each(|v| *v *= f);
            m.sin.iter_mut().for_each(|v| *v *= f);
        }
        out
    }

    /// `ζ * U` for the Q1 hat of width `eps` in macroscopic units, i.e. the
    /// quasi-interpolant of the microscopic field, expressed back at scale 1.
    pub fn convolved_with_hat(&self, eps: f64) -> Self {
        self.map_modes(|w| {
            w.iter()
                .map(|&m| {
                    let h = PI * m as f64 * eps;
                    if h == 0.0 {
                        1.0
                    } else {
                        (h.sin() / h).powi(2)
                    }
                })
                .product()
        })
    }

    fn phase(&self, m: &FourierMode, x: &[f64]) -> f64 {
        2.0 * PI * m.wave.iter().zip(x).map(|(&w, &xi)| w as f64 * xi).sum::<f64>()
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for m in &self.modes {
            let (s, c) = self.phase(m, x).sin_cos();
            for i in 0..self.dim {
                out[i] += m.cos[i] * c + m.sin[i] * s;
            }
        }
        out
    }

    /// `∂_a U_i` as a row-major `d×d` array (`[i * d + a]`).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for m in &self.modes {
            let (s, c) = self.phase(m, x).sin_cos();
            for i in 0..d {
                let amp = -m.cos[i] * s + m.sin[i] * c;
                for a in 0..d {
                    out[i * d + a] += amp * 2.0 * PI * m.wave[a] as f64;
                }
            }
        }
        out
    }

    /// `∂_a ∂_b U_i` stored at `[(i * d + a) * d + b]`.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d * d];
        for m in &self.modes {
            let (s, c) = self.phase(m, x).sin_cos();
            for i in 0..d {
                let amp = -(m.cos[i] * c + m.sin[i] * s);
                for a in 0..d {
                    for b in 0..d {
                        out[(i * d + a) * d + b] +=
                            amp * 4.0 * PI * PI * (m.wave[a] * m.wave[b]) as f64;
                    }
                }
            }
        }
        out
    }

    /// Sup of `|∇U|` (Frobenius) estimated on a uniform grid of `n` points per
    /// axis.
    pub fn max_gradient(&self, n: usize) -> f64 {
        let d = self.dim;
        let total = n.pow(d as u32);
        let mut worst = 0.0f64;
        for idx in 0..total {
            let c = grid_coords(idx, n, d);
            let x: Vec<f64> = (0..d).map(|a| c[a] as f64 / n as f64).collect();
            let g = self.gradient(&x);
            worst = worst.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        worst
    }

    /// Samples every component on the uniform `n^d` grid of the unit torus;
    /// returns component-major data (`[i][point]`).
    pub fn sample_grid(&self, n: usize) -> Vec<Vec<f64>> {
        let d = self.dim;
        let total = n.pow(d as u32);
        let mut out = vec![vec![0.0; total]; d];
        for idx in 0..total {
            let c = grid_coords(idx, n, d);
            let x: Vec<f64> = (0..d).map(|a| c[a] as f64 / n as f64).collect();
            let v = self.value(&x);
            for i in 0..d {
                out[i][idx] = v[i];
            }
        }
        out
    }
}

/// Band-limited periodic grid function on the unit torus, evaluated anywhere
/// through its trigonometric interpolant.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    n: usize,
    dim: usize,
    spectrum: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(values: &[f64], n: usize, dim: usize) -> Self {
        let mut c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fftn(&mut c, n, dim, false);
        let s = 1.0 / c.len() as f64;
        c.iter_mut().for_each(|v| *v *= s);
        Self { n, dim, spectrum: c }
    }

    /// Value and gradient at `x ∈ R^d` (torus of side 1). Nyquist bins are
    /// dropped.
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n;
        let d = self.dim;
        let tw: Vec<Vec<Complex64>> = (0..d)
            .map(|a| {
                (0..n)
                    .map(|k| Complex64::from_polar(1.0, 2.0 * PI * frequency(k, n) as f64 * x[a]))
                    .collect()
            })
            .collect();
        let mut val = 0.0;
        let mut grad = vec![0.0; d];
        for (idx, c) in self.spectrum.iter().enumerate() {
            let g = grid_coords(idx, n, d);
            if n % 2 == 0 && (0..d).any(|a| g[a] == n / 2) {
                continue;
            }
            let mut e = *c;
            for a in 0..d {
                e *= tw[a][g[a]];
            }
            val += e.re;
            for a in 0..d {
                grad[a] -= e.im * 2.0 * PI * frequency(g[a], n) as f64;
            }
        }
        (val, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip_2d() {
        let n = 6;
        let data: Vec<Complex64> = (0..36).map(|i| Complex64::new((i as f64).sin(), 0.0)).collect();
        let mut c = data.clone();
        fftn(&mut c, n, 2, false);
        fftn(&mut c, n, 2, true);
        for (a, b) in c.iter().zip(&data) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn spectral_derivative_of_trig_field() {
        let n = 16;
        let f = FourierField::sine(vec![2, 1], vec![1.0, 0.5], 0.3);
        let grid = f.sample_grid(n);
        let d0 = spectral_derivative(&grid[0], n, 2, 0, 1.0);
        for idx in 0..n * n {
            let c = grid_coords(idx, n, 2);
            let x = [c[0] as f64 / n as f64, c[1] as f64 / n as f64];
            let g = f.gradient(&x);
            assert!((d0[idx] - g[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = FourierField::new(
            2,
            vec![
                FourierMode { wave: vec![1, 2], cos: vec![0.2, -0.1], sin: vec![0.05, 0.3] },
                FourierMode { wave: vec![-3, 1], cos: vec![0.0, 0.1], sin: vec![0.1, 0.0] },
            ],
        )
        .unwrap();
        let x = [0.123, 0.456];
        let h = 1e-5;
        let g = f.gradient(&x);
        let hs = f.hessian(&x);
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let (vp, vm) = (f.value(&xp), f.value(&xm));
            let (gp, gm) = (f.gradient(&xp), f.gradient(&xm));
            for i in 0..2 {
                assert!(((vp[i] - vm[i]) / (2.0 * h) - g[i * 2 + a]).abs() < 1e-6);
                for b in 0..2 {
                    let fd = (gp[i * 2 + b] - gm[i * 2 + b]) / (2.0 * h);
                    assert!((fd - hs[(i * 2 + b) * 2 + a]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn trig_interpolant_reproduces_band_limited_field() {
        let n = 8;
        let f = FourierField::sine(vec![3], vec![1.0], 0.7);
        let grid = f.sample_grid(n);
        let t = TrigInterpolant::new(&grid[0], n, 1);
        for &x in &[0.013, 0.31, 0.777] {
            let (v, g) = t.value_and_gradient(&[x]);
            assert!((v - f.value(&[x])[0]).abs() < 1e-13);
            assert!((g[0] - f.gradient(&[x])[0]).abs() < 1e-11);
        }
    }
}
