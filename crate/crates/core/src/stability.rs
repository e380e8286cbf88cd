//! Dynamical symbol, lattice stability constant, Legendre–Hadamard check of
//! the Cauchy–Born moduli and the alternating-strain eigenprobe.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{DisplacementField, LatticeSpec};
use crate::potentials::{Potential, PotentialKind, SiteHessian};
use crate::stress::CbModel;

const GOLDEN_OFFSET: f64 = 0.618_033_988_749_894_8;

/// `e^{iθ} - 1` without cancellation near `θ = 0`.
fn phase_minus_one(theta: f64) -> Complex64 {
    let s = (0.5 * theta).sin();
    Complex64::new(-2.0 * s * s, theta.sin())
}

/// Reference Hessian blocks `V_ρς(0)`.
fn reference_hessian(p: &Potential) -> Result<SiteHessian> {
    p.site_hessian_all(&vec![0.0; p.stencil().len() * p.dim()])
}

fn symbol_from(p: &Potential, h: &SiteHessian, k: &[f64]) -> DMatrix<Complex64> {
    let d = p.dim();
    let phases: Vec<Complex64> = p
        .stencil()
        .directions()
        .iter()
        .map(|rho| {
            let r = rho.components();
            phase_minus_one((0..d).map(|a| k[a] * r[a] as f64).sum())
        })
        .collect();
    let mut out = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    for (i, a) in phases.iter().enumerate() {
        let w = a.norm_sqr();
        let blk = h.diagonal_block(i);
        for r in 0..d {
            for c in 0..d {
                out[(r, c)] += blk[r * d + c] * w;
            }
        }
    }
    if let Some((c, w)) = h.coupling() {
        // Σ_ρς c w_ρ ⊗ w_ς a_ρ conj(a_ς)
        let mut v = vec![Complex64::new(0.0, 0.0); d];
        for (i, a) in phases.iter().enumerate() {
            for r in 0..d {
                v[r] += w[i * d + r] * a;
            }
        }
        for r in 0..d {
            for s in 0..d {
                out[(r, s)] += v[r] * v[s].conj() * c;
            }
        }
    }
    out
}

/// `Ĥ(k) = Σ_{ρς} V_ρς(0) (e^{ik·ρ} - 1)(e^{-ik·ς} - 1)`.
pub fn dynamical_symbol(p: &Potential, k: &[f64]) -> Result<DMatrix<Complex64>> {
    if k.len() != p.dim() {
        return Err(Error::Config(format!("wavevector must have {} components", p.dim())));
    }
    Ok(symbol_from(p, &reference_hessian(p)?, k))
}

/// Ascending real eigenvalues of a Hermitian matrix.
fn hermitian_eigenvalues(m: DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = if m.nrows() == 1 {
        vec![m[(0, 0)].re]
    } else {
        SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
    };
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// `g(k) = Σ_α 4 sin²(k_α / 2)`.
pub fn normalizer(k: &[f64]) -> f64 {
    k.iter().map(|&v| 4.0 * (0.5 * v).sin().powi(2)).sum()
}

fn ratio(p: &Potential, h: &SiteHessian, k: &[f64]) -> f64 {
    let g = normalizer(k);
    hermitian_eigenvalues(symbol_from(p, h, k))[0] / g
}

/// Result of [`stability_constant`].
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub gamma: f64,
    /// Wavevector attaining the estimate.
    pub k_min: Vec<f64>,
    pub grid_points: usize,
    pub stable: bool,
}

/// `γ ≈ min_k λ_min(Ĥ(k)) / g(k)` over a golden-offset Brillouin grid with
/// `n` points per axis, refined locally around the best grid point.
pub fn stability_constant(p: &Potential, n: usize) -> Result<StabilityReport> {
    if n == 0 {
        return Err(Error::Config("empty Brillouin grid".into()));
    }
    let d = p.dim();
    let h = reference_hessian(p)?;
    let axis: Vec<f64> = (0..n)
        .map(|j| -PI + 2.0 * PI * (j as f64 + GOLDEN_OFFSET) / n as f64)
        .collect();
    let total = n.pow(d as u32);
    let best = (0..total)
        .into_par_iter()
        .map(|idx| {
            let k = grid_point(&axis, idx, d);
            (ratio(p, &h, &k), idx)
        })
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let mut k = grid_point(&axis, best.1, d);
    let mut value = best.0;
    // coordinate-wise golden-section refinement on shrinking windows
    let mut width = 2.0 * PI / n as f64;
    for _ in 0..6 {
        for a in 0..d {
            let (x, v) = golden_min(
                |t| {
                    let mut kk = k.clone();
                    kk[a] = t;
                    if kk.iter().all(|v| v.abs() < 1e-7) {
                        return f64::INFINITY;
                    }
                    ratio(p, &h, &kk)
                },
                k[a] - width,
                k[a] + width,
                80,
            );
            if v < value {
                value = v;
                k[a] = x;
            }
        }
        width *= 0.5;
    }
    Ok(StabilityReport {
        gamma: value,
        k_min: k,
        grid_points: total,
        stable: value > 0.0,
    })
}

fn grid_point(axis: &[f64], mut idx: usize, d: usize) -> Vec<f64> {
    let n = axis.len();
    let mut k = vec![0.0; d];
    for a in (0..d).rev() {
        k[a] = axis[idx % n];
        idx /= n;
    }
    k
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let r = GOLDEN_OFFSET;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `min_{|a| = |b| = 1} ℂ(F)[a ⊗ b, a ⊗ b]`, through the smallest eigenvalue
/// of the acoustic tensor over a grid of directions `b` with refinement.
pub fn legendre_hadamard_min(m: &CbModel, f: &DMatrix<f64>) -> Result<f64> {
    let moduli = m.moduli(f)?;
    let d = m.dim();
    let acoustic_min = |b: &[f64]| -> f64 {
        let a = moduli.acoustic(b);
        SymmetricEigen::new(a).eigenvalues.min()
    };
    Ok(match d {
        1 => moduli.get(0, 0, 0, 0),
        2 => {
            let n = 720;
            let f = |t: f64| acoustic_min(&[t.cos(), t.sin()]);
            let (best, t0) = (0..n)
                .map(|j| {
                    let t = PI * j as f64 / n as f64;
                    (f(t), t)
                })
                .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
            let h = PI / n as f64;
            golden_min(f, t0 - h, t0 + h, 60).1.min(best)
        }
        _ => {
            let sph = |t: f64, ph: f64| [t.sin() * ph.cos(), t.sin() * ph.sin(), t.cos()];
            let (nt, np) = (90, 180);
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for i in 0..=nt {
                for j in 0..np {
                    let t = PI * i as f64 / nt as f64;
                    let ph = 2.0 * PI * j as f64 / np as f64;
                    let v = acoustic_min(&sph(t, ph));
                    if v < best.0 {
                        best = (v, t, ph);
                    }
                }
            }
            let (mut v, mut t, mut ph) = best;
            let mut w = PI / nt as f64;
            for _ in 0..6 {
                let (t1, v1) = golden_min(|x| acoustic_min(&sph(x, ph)), t - w, t + w, 50);
                if v1 < v {
                    v = v1;
                    t = t1;
                }
                let (p1, v2) = golden_min(|x| acoustic_min(&sph(t, x)), ph - 2.0 * w, ph + 2.0 * w, 50);
                if v2 < v {
                    v = v2;
                    ph = p1;
                }
                w *= 0.5;
            }
            v
        }
    })
}

/// Outcome of applying `H = δ²E^a(0)` to the alternating-strain field.
#[derive(Debug, Clone, Serialize)]
pub struct EigenProbe {
    /// `⟨Hv, v⟩ / ‖∇v‖²`.
    pub rayleigh_quotient: f64,
    /// `⟨Hv, v⟩ / ‖v‖²`.
    pub l2_eigenvalue: f64,
    /// `‖Hv - λ v‖ / ‖v‖` with `λ` the ℓ² eigenvalue; zero for an exact eigenvector.
    pub residual: f64,
}

/// Field with alternating strain `v(ξ + 1) - v(ξ) = (-1)^ξ`, zero mean.
pub fn alternating_strain(lattice: &LatticeSpec) -> Result<DisplacementField> {
    if lattice.dim() != 1 || lattice.cells() % 2 != 0 {
        return Err(Error::Config("alternating strain needs a 1D chain with an even number of sites".into()));
    }
    Ok(DisplacementField::from_fn(lattice, |x| {
        vec![if (x[0] as i64) % 2 == 0 { -0.5 } else { 0.5 }]
    }))
}

/// Applies the reference Hessian of a harmonic chain to the alternating
/// strain field on `cells` sites.
pub fn instability_eigenprobe(p: &Potential, cells: usize) -> Result<EigenProbe> {
    if !matches!(p.kind(), PotentialKind::HarmonicChain { .. }) {
        return Err(Error::Config("eigenprobe is defined for the harmonic chain".into()));
    }
    if cells % 2 != 0 {
        return Err(Error::Config(format!("alternating pattern needs an even chain, got N = {cells}")));
    }
    let lat = LatticeSpec::cubic(1, cells)?;
    let v = alternating_strain(&lat)?;
    let hv = p.hessian_apply(&DisplacementField::zeros(&lat), &v)?;
    let q = hv.dot(&v);
    let grad2: f64 = (0..lat.num_sites())
        .map(|s| {
            let g = v.get(lat.shift(s, &p.stencil().directions()[2]))[0] - v.get(s)[0];
            g * g
        })
        .sum();
    let lambda = q / v.dot(&v);
    let mut r = hv.clone();
    r.axpy(-lambda, &v);
    Ok(EigenProbe {
        rayleigh_quotient: q / grad2,
        l2_eigenvalue: lambda,
        residual: r.l2_norm() / v.l2_norm(),
    })
}

/// Smallest generalized Rayleigh quotient `⟨δ²E^a(u) v, v⟩ / Σ_α |D_α v|²`
/// over non-constant periodic `v`, by dense assembly.
pub fn min_rayleigh_quotient(p: &Potential, u: &DisplacementField) -> Result<f64> {
    let lat = u.lattice();
    let d = lat.dim();
    let dofs = lat.num_sites() * d;
    let op = p.hessian(u)?;
    let mut hm = DMatrix::zeros(dofs, dofs);
    let mut gm = DMatrix::zeros(dofs, dofs);
    let mut unit = DisplacementField::zeros(lat);
    let axes: Vec<_> = (0..d)
        .map(|a| {
            let mut e = vec![0i64; d];
            e[a] = 1;
            crate::lattice::Direction::new(e).expect("unit direction")
        })
        .collect();
    for col in 0..dofs {
        unit.values_mut()[col] = 1.0;
        let hv = op.apply(&unit);
        hm.set_column(col, &nalgebra::DVector::from_column_slice(hv.values()));
        // Σ_α D_α^T D_α e_col
        let mut gv = DisplacementField::zeros(lat);
        for ax in &axes {
            for s in 0..lat.num_sites() {
                let fwd = lat.shift(s, ax);
                for i in 0..d {
                    let diff = unit.get(fwd)[i] - unit.get(s)[i];
                    gv.get_mut(fwd)[i] += diff;
                    gv.get_mut(s)[i] -= diff;
                }
            }
        }
        gm.set_column(col, &nalgebra::DVector::from_column_slice(gv.values()));
        unit.values_mut()[col] = 0.0;
    }
    let hm = 0.5 * (&hm + hm.transpose());
    let ge = SymmetricEigen::new(gm);
    let keep: Vec<usize> = (0..dofs).filter(|&i| ge.eigenvalues[i] > 1e-10).collect();
    let mut basis = DMatrix::zeros(dofs, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = 1.0 / ge.eigenvalues[i].sqrt();
        basis.set_column(c, &(ge.eigenvectors.column(i) * s));
    }
    let reduced = basis.transpose() * hm * &basis;
    let reduced = 0.5 * (&reduced + reduced.transpose());
    Ok(SymmetricEigen::new(reduced).eigenvalues.min())
}

/// `min_{k ≠ 0} λ_min(Ĥ(k)) / g(k)` over the wavevectors resolved by a
/// periodic supercell with `cells` sites per axis.
pub fn symbol_min_on_supercell(p: &Potential, cells: usize) -> Result<f64> {
    let d = p.dim();
    let h = reference_hessian(p)?;
    let total = cells.pow(d as u32);
    let axis: Vec<f64> = (0..cells).map(|j| 2.0 * PI * j as f64 / cells as f64).collect();
    Ok((1..total)
        .map(|idx| ratio(p, &h, &grid_point(&axis, idx, d)))
        .fold(f64::INFINITY, f64::min))
}

/// One wavevector of a [`DispersionSpectrum`].
#[derive(Debug, Clone, Serialize)]
pub struct DispersionPoint {
    pub k: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub normalizer: f64,
}

/// Eigenvalues of `Ĥ(k)` on a golden-offset Brillouin grid.
#[derive(Debug, Clone, Serialize)]
pub struct DispersionSpectrum {
    pub dim: usize,
    pub points: Vec<DispersionPoint>,
}

impl DispersionSpectrum {
    pub fn compute(p: &Potential, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("empty Brillouin grid".into()));
        }
        let d = p.dim();
        let h = reference_hessian(p)?;
        let axis: Vec<f64> = (0..n)
            .map(|j| -PI + 2.0 * PI * (j as f64 + GOLDEN_OFFSET) / n as f64)
            .collect();
        let points = (0..n.pow(d as u32))
            .into_par_iter()
            .map(|idx| {
                let k = grid_point(&axis, idx, d);
                DispersionPoint {
                    eigenvalues: hermitian_eigenvalues(symbol_from(p, &h, &k)),
                    normalizer: normalizer(&k),
                    k,
                }
            })
            .collect();
        Ok(Self { dim: d, points })
    }

    /// Largest phonon frequency `ω = sqrt(λ_max)` on the grid.
    pub fn max_frequency(&self) -> f64 {
        self.points
            .iter()
            .flat_map(|p| p.eigenvalues.iter())
            .fold(0.0f64, |a, &b| a.max(b))
            .sqrt()
    }

    /// Columns `k_1..k_d, lambda_1..lambda_d, normalizer, ratio` where
    /// `ratio = lambda_1 / normalizer`.
    pub fn to_csv(&self) -> String {
        let d = self.dim;
        let mut header: Vec<String> = (1..=d).map(|a| format!("k{a}")).collect();
        header.extend((1..=d).map(|a| format!("lambda{a}")));
        header.push("normalizer".into());
        header.push("ratio".into());
        let mut out = header.join(",");
        out.push('\n');
        for p in &self.points {
            let mut row: Vec<String> = p.k.iter().map(|v| format!("{v:.17e}")).collect();
            row.extend(p.eigenvalues.iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", p.normalizer));
            row.push(format!("{:.17e}", p.eigenvalues[0] / p.normalizer));
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Frequency scale `sqrt(max |λ|)` of the reference symbol over a uniform
/// Brillouin grid including the zone boundary; unstable branches count with
/// their growth rate.
pub fn max_frequency(p: &Potential) -> Result<f64> {
    let d = p.dim();
    let h = reference_hessian(p)?;
    let n = if d == 1 { 256 } else if d == 2 { 64 } else { 16 };
    let axis: Vec<f64> = (0..=n).map(|j| -PI + 2.0 * PI * j as f64 / n as f64).collect();
    let total = axis.len().pow(d as u32);
    let mut best = 0.0f64;
    for idx in 0..total {
        let k = grid_point(&axis, idx, d);
        let ev = hermitian_eigenvalues(symbol_from(p, &h, &k));
        best = best.max(ev[d - 1]).max(-ev[0]);
    }
    Ok(best.sqrt())
}
