//! Cauchy–Born energy density, stress and moduli; the atomistic stress
//! field `S^a(u; x) = Σ_ξ Σ_ρ [V_ρ(Du(ξ)) ⊗ ρ] χ_{ξ,ρ}(x)` and its divergence.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::FourierField;
use crate::interpolation::{chi_eval, chi_support, grad_rho_chi};
use crate::lattice::{DisplacementField, LatticeSpec};
use crate::potentials::Potential;

/// Cauchy–Born model `W(F) = V(F·Λ_*)` built on a site potential.
#[derive(Debug, Clone)]
pub struct CbModel {
    potential: Potential,
}

/// `ℂ_{iα,jβ} = ∂²W / ∂F_{iα} ∂F_{jβ}` stored as a `d² × d²` matrix with
/// row index `i * d + α`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moduli {
    dim: usize,
    matrix: DMatrix<f64>,
}

impl Moduli {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, alpha: usize, j: usize, beta: usize) -> f64 {
        let d = self.dim;
        self.matrix[(i * d + alpha, j * d + beta)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `ℂ[a ⊗ b, a ⊗ b]`.
    pub fn rank_one(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for al in 0..d {
                for j in 0..d {
                    for be in 0..d {
                        s += self.get(i, al, j, be) * a[i] * b[al] * a[j] * b[be];
                    }
                }
            }
        }
        s
    }

    /// Acoustic tensor `A(b)_{ij} = Σ_{αβ} ℂ_{iα,jβ} b_α b_β`.
    pub fn acoustic(&self, b: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |i, j| {
            let mut s = 0.0;
            for al in 0..d {
                for be in 0..d {
                    s += self.get(i, al, j, be) * b[al] * b[be];
                }
            }
            s
        })
    }

    /// `(ℂ : H)_i = Σ_{jαβ} ℂ_{iα,jβ} H_{jαβ}` for a Hessian stored as
    /// `[(j * d + α) * d + β]`.
    pub fn contract_hessian(&self, hess: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let mut s = 0.0;
                for al in 0..d {
                    for j in 0..d {
                        for be in 0..d {
                            s += self.get(i, al, j, be) * hess[(j * d + al) * d + be];
                        }
                    }
                }
                s
            })
            .collect()
    }
}

impl CbModel {
    pub fn new(potential: Potential) -> Self {
        Self { potential }
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    /// Homogeneous stencil `g_ρ = Fρ`.
    pub fn homogeneous_stencil(&self, f: &DMatrix<f64>) -> Vec<f64> {
        let d = self.dim();
        let mut g = Vec::with_capacity(self.potential.stencil().len() * d);
        for rho in self.potential.stencil().directions() {
            let r = rho.as_f64();
            for i in 0..d {
                g.push((0..d).map(|a| f[(i, a)] * r[a]).sum());
            }
        }
        g
    }

    fn check_shape(&self, f: &DMatrix<f64>) -> Result<()> {
        let d = self.dim();
        if f.nrows() != d || f.ncols() != d {
            return Err(Error::Config(format!("deformation gradient must be {d}x{d}")));
        }
        Ok(())
    }

    /// `W(F)`.
    pub fn energy_density(&self, f: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(f)?;
        self.potential.site_energy(&self.homogeneous_stencil(f))
    }

    /// `S^c(F) = Σ_ρ V_ρ(F·Λ_*) ⊗ ρ`.
    pub fn stress(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(f)?;
        let d = self.dim();
        let grad = self.potential.site_gradient(&self.homogeneous_stencil(f))?;
        Ok(bond_sum(&self.potential, &grad, d))
    }

    /// `ℂ(F) = Σ_{ρς} V_ρς(F·Λ_*) ⊗ ρ ⊗ ς`.
    pub fn moduli(&self, f: &DMatrix<f64>) -> Result<Moduli> {
        self.check_shape(f)?;
        let d = self.dim();
        let stencil = self.potential.stencil();
        let n = stencil.len();
        let hess = self.potential.site_hessian_all(&self.homogeneous_stencil(f))?;
        let mut matrix = DMatrix::zeros(d * d, d * d);
        let mut x = vec![0.0; n * d];
        let mut y = vec![0.0; n * d];
        for j in 0..d {
            for be in 0..d {
                for (k, rho) in stencil.directions().iter().enumerate() {
                    for a in 0..d {
                        x[k * d + a] = if a == j { rho.as_f64()[be] } else { 0.0 };
                    }
                }
                hess.apply(&x, &mut y);
                let col = bond_sum(&self.potential, &y, d);
                for i in 0..d {
                    for al in 0..d {
                        matrix[(i * d + al, j * d + be)] = col[(i, al)];
                    }
                }
            }
        }
        Ok(Moduli { dim: d, matrix })
    }
}

/// `Σ_ρ w_ρ ⊗ ρ` for a stencil-shaped vector `w`.
fn bond_sum(p: &Potential, w: &[f64], d: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(d, d);
    for (k, rho) in p.stencil().directions().iter().enumerate() {
        let r = rho.components();
        for i in 0..d {
            for a in 0..d {
                s[(i, a)] += w[k * d + i] * r[a] as f64;
            }
        }
    }
    s
}

/// The atomistic stress of a fixed displacement, with bond forces cached.
#[derive(Debug, Clone)]
pub struct AtomisticStress<'a> {
    potential: &'a Potential,
    lattice: LatticeSpec,
    grads: Vec<f64>,
}

impl<'a> AtomisticStress<'a> {
    pub fn new(potential: &'a Potential, u: &DisplacementField) -> Result<Self> {
        Ok(Self {
            potential,
            lattice: u.lattice().clone(),
            grads: potential.site_gradients(u)?,
        })
    }

    /// Builds the stress for a displacement given only through its bond
    /// forces, e.g. a homogeneous state that is not periodic.
    pub fn from_site_gradients(potential: &'a Potential, lattice: &LatticeSpec, grads: Vec<f64>) -> Result<Self> {
        let want = lattice.num_sites() * potential.stencil().len() * potential.dim();
        if grads.len() != want {
            return Err(Error::Config(format!("expected {want} bond forces, got {}", grads.len())));
        }
        Ok(Self {
            potential,
            lattice: lattice.clone(),
            grads,
        })
    }

    fn bond_force(&self, xi: &[i64], k: usize) -> &[f64] {
        let d = self.potential.dim();
        let n = self.potential.stencil().len();
        let site = self.lattice.index(xi);
        &self.grads[(site * n + k) * d..(site * n + k + 1) * d]
    }

    /// `S^a(u; x)` at a point in lattice coordinates.
    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.potential.dim();
        let mut s = DMatrix::zeros(d, d);
        for (k, rho) in self.potential.stencil().directions().iter().enumerate() {
            let r = rho.components();
            let mut acc = [0.0; 3];
            chi_support(rho, x, |xi| {
                let w = chi_eval(&xi[..d], rho, x);
                if w != 0.0 {
                    for (a, f) in acc.iter_mut().zip(self.bond_force(&xi[..d], k)) {
                        *a += w * f;
                    }
                }
            });
            for i in 0..d {
                for a in 0..d {
                    s[(i, a)] += acc[i] * r[a] as f64;
                }
            }
        }
        s
    }

    /// `div S^a(u; x) = Σ_ρ Σ_ξ V_ρ(Du(ξ)) ∇_ρ χ_{ξ,ρ}(x)`.
    pub fn divergence(&self, x: &[f64]) -> Vec<f64> {
        let d = self.potential.dim();
        let mut out = vec![0.0; d];
        for (k, rho) in self.potential.stencil().directions().iter().enumerate() {
            chi_support(rho, x, |xi| {
                let w = grad_rho_chi(&xi[..d], rho, x);
                if w != 0.0 {
                    for (o, f) in out.iter_mut().zip(self.bond_force(&xi[..d], k)) {
                        *o += w * f;
                    }
                }
            });
        }
        out
    }
}

/// `S^a(u; x)`.
pub fn atomistic_stress(p: &Potential, u: &DisplacementField, x: &[f64]) -> Result<DMatrix<f64>> {
    Ok(AtomisticStress::new(p, u)?.at(x))
}

/// `div S^a(u; x)`.
pub fn div_atomistic_stress(p: &Potential, u: &DisplacementField, x: &[f64]) -> Result<Vec<f64>> {
    Ok(AtomisticStress::new(p, u)?.divergence(x))
}

/// `div S^c(∇u(x)) = ℂ(∇u(x)) : ∇²u(x)` from the gradient and Hessian of
/// the continuum displacement at `x`.
pub fn div_cb_stress(m: &CbModel, grad: &DMatrix<f64>, hessian: &[f64]) -> Result<Vec<f64>> {
    Ok(m.moduli(grad)?.contract_hessian(hessian))
}

/// Which stress a [`StressField`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StressLabel {
    Atomistic,
    CauchyBorn,
    Difference,
}

impl StressLabel {
    fn as_str(self) -> &'static str {
        match self {
            Self::Atomistic => "atomistic",
            Self::CauchyBorn => "cauchy_born",
            Self::Difference => "difference",
        }
    }
}

/// Stress tensors sampled on an evaluation grid.
#[derive(Debug, Clone)]
pub struct StressField {
    pub label: StressLabel,
    pub points: Vec<Vec<f64>>,
    pub tensors: Vec<DMatrix<f64>>,
}

impl StressField {
    /// CSV with columns `x_1..x_d, S_11..S_dd, label` (row-major tensor).
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map(|p| p.len()).unwrap_or(0);
        let mut out = String::new();
        let mut header: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
        for i in 1..=d {
            for a in 1..=d {
                header.push(format!("S{i}{a}"));
            }
        }
        header.push("label".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for (x, s) in self.points.iter().zip(&self.tensors) {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            for i in 0..d {
                for a in 0..d {
                    row.push(format!("{:.17e}", s[(i, a)]));
                }
            }
            row.push(self.label.as_str().into());
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Evaluation points `m` per unit cell per axis, staggered half a spacing
/// from the lattice, visiting every `stride`-th cell per axis.
pub fn evaluation_grid(lattice: &LatticeSpec, per_cell: usize, stride: usize) -> Vec<Vec<f64>> {
    let d = lattice.dim();
    let n = lattice.cells();
    let stride = stride.max(1);
    let cells: Vec<usize> = (0..n).step_by(stride).collect();
    let per_axis: Vec<f64> = cells
        .iter()
        .flat_map(|&c| (0..per_cell).map(move |k| c as f64 + (k as f64 + 0.5) / per_cell as f64))
        .collect();
    let total = per_axis.len().pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; d];
            for a in (0..d).rev() {
                x[a] = per_axis[idx % per_axis.len()];
                idx /= per_axis.len();
            }
            x
        })
        .collect()
}

/// Samples `S^a`, `S^c` and their difference on the evaluation grid for the
/// microscopic field `u(x) = ε⁻¹ U(εx)`.
pub fn stress_fields(
    p: &Potential,
    m: &CbModel,
    macro_field: &FourierField,
    cells: usize,
    per_cell: usize,
) -> Result<[StressField; 3]> {
    let (lattice, u) = sample_micro(p, macro_field, cells)?;
    let sa = AtomisticStress::new(p, &u)?;
    let eps = 1.0 / cells as f64;
    let points = evaluation_grid(&lattice, per_cell, 1);
    let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = points
        .par_iter()
        .map(|x| {
            let big: Vec<f64> = x.iter().map(|v| v * eps).collect();
            let f = grad_matrix(&macro_field.gradient(&big), p.dim());
            Ok((sa.at(x), m.stress(&f)?))
        })
        .collect::<Result<_>>()?;
    let (a, c): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let diff = a.iter().zip(&c).map(|(a, c)| a - c).collect();
    Ok([
        StressField { label: StressLabel::Atomistic, points: points.clone(), tensors: a },
        StressField { label: StressLabel::CauchyBorn, points: points.clone(), tensors: c },
        StressField { label: StressLabel::Difference, points, tensors: diff },
    ])
}

pub(crate) fn grad_matrix(flat: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, flat)
}

/// Lattice with `cells` sites per axis and the sampled microscopic field
/// `u(ξ) = ε⁻¹ U(εξ)`, `ε = 1 / cells`.
pub fn sample_micro(p: &Potential, macro_field: &FourierField, cells: usize) -> Result<(LatticeSpec, DisplacementField)> {
    let d = p.dim();
    if macro_field.dim != d {
        return Err(Error::Config("field and potential dimensions differ".into()));
    }
    let lattice = LatticeSpec::new(d, p.orientation().clone(), cells)?;
    let eps = 1.0 / cells as f64;
    let u = DisplacementField::from_fn(&lattice, |x| {
        let big: Vec<f64> = x.iter().map(|v| v * eps).collect();
        macro_field.value(&big).into_iter().map(|v| v / eps).collect()
    });
    Ok((lattice, u))
}

/// Sup-norm gaps between atomistic and Cauchy–Born stresses.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConsistencyErrors {
    pub eps: f64,
    /// `max_x |S^a(x) - S^c(x)|` (Frobenius).
    pub stress: f64,
    /// `max_x |div S^a(x) - div S^c(x)|` in macroscopic units (`ε⁻¹` times
    /// the microscopic divergence gap).
    pub divergence: f64,
}

/// Consistency errors for `u(x) = ε⁻¹ U(εx)` on `cells = 1/ε` sites per
/// axis, sampled `per_cell` times per unit cell and every `stride` cells.
pub fn stress_consistency_field(
    p: &Potential,
    m: &CbModel,
    macro_field: &FourierField,
    cells: usize,
    per_cell: usize,
    stride: usize,
) -> Result<ConsistencyErrors> {
    let (lattice, u) = sample_micro(p, macro_field, cells)?;
    let d = p.dim();
    let eps = 1.0 / cells as f64;
    let sa = AtomisticStress::new(p, &u)?;
    let points = evaluation_grid(&lattice, per_cell, stride);
    let gaps: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| {
            let big: Vec<f64> = x.iter().map(|v| v * eps).collect();
            let f = grad_matrix(&macro_field.gradient(&big), d);
            let moduli = m.moduli(&f)?;
            let sc = m.stress(&f)?;
            let s_gap = (sa.at(x) - sc).norm();
            // micro Hessian is ε ∇²U; micro div S^c = ε ℂ : ∇²U
            let div_c: Vec<f64> = moduli
                .contract_hessian(&macro_field.hessian(&big))
                .into_iter()
                .map(|v| v * eps)
                .collect();
            let div_a = sa.divergence(x);
            let dg = div_a
                .iter()
                .zip(&div_c)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt();
            Ok((s_gap, dg / eps))
        })
        .collect::<Result<_>>()?;
    let stress = gaps.iter().map(|g| g.0).fold(0.0, f64::max);
    let divergence = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    Ok(ConsistencyErrors { eps, stress, divergence })
}
