//! Site energies over finite-difference stencils: pair, EAM and the 1D
//! second-neighbour harmonic chain.

mod decay;
mod radial;

pub use decay::{decay_report, DecayConstant, DecayEntry, DecayReport};
pub use radial::{Polynomial, RadialFunction};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DisplacementField, LatticeSpec, StencilSet};

/// Variant payload of a [`Potential`].
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `V(g) = ½ Σ_ρ [φ(|Aρ + g_ρ|) - φ(|Aρ|)]`.
    Pair { phi: RadialFunction },
    /// `V(g) = Σ_ρ [φ(|Aρ + g_ρ|) - φ(|Aρ|)] + G(Σ_ρ ψ(|Aρ + g_ρ|)) - G(ψ̄₀)`.
    Eam {
        phi: Option<RadialFunction>,
        density: RadialFunction,
        embedding: Polynomial,
    },
    /// `V(g) = a1/4 (g₋₁² + g₁²) + a2/4 (g₋₂² + g₂²)`, d = 1.
    HarmonicChain { a1: f64, a2: f64 },
}

/// A site energy `V` on a finite stencil together with its admissibility
/// bound `κ`.
#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    kappa: f64,
    stencil: StencilSet,
    orientation: DMatrix<f64>,
    /// `Aρ` for every stencil direction, flattened.
    bonds: Vec<f64>,
    bond_lengths: Vec<f64>,
    reference_energy: f64,
    reference_density: f64,
}

/// Default admissibility bound `0.25 / ‖A⁻¹‖₂`, which keeps every bond
/// length above `0.75 |ρ| / ‖A⁻¹‖₂`.
pub fn default_kappa(orientation: &DMatrix<f64>) -> f64 {
    let inv = orientation
        .clone()
        .try_inverse()
        .expect("orientation validated as invertible");
    let norm = inv.singular_values().max();
    0.25 / norm
}

impl Potential {
    fn build(kind: PotentialKind, orientation: DMatrix<f64>, stencil: StencilSet) -> Result<Self> {
        let d = orientation.nrows();
        if orientation.ncols() != d || stencil.dim() != d {
            return Err(Error::Config("orientation and stencil dimensions differ".into()));
        }
        let mut bonds = Vec::with_capacity(stencil.len() * d);
        let mut bond_lengths = Vec::with_capacity(stencil.len());
        for rho in stencil.directions() {
            let r = rho.as_f64();
            let mut len2 = 0.0;
            for i in 0..d {
                let v: f64 = (0..d).map(|a| orientation[(i, a)] * r[a]).sum();
                bonds.push(v);
                len2 += v * v;
            }
            bond_lengths.push(len2.sqrt());
        }
        let mut pot = Self {
            kind,
            kappa: default_kappa(&orientation),
            stencil,
            orientation,
            bonds,
            bond_lengths,
            reference_energy: 0.0,
            reference_density: 0.0,
        };
        match &pot.kind {
            PotentialKind::Pair { phi } => {
                pot.reference_energy = pot.bond_lengths.iter().map(|&r| phi.value(r)).sum();
            }
            PotentialKind::Eam { phi, density, .. } => {
                pot.reference_energy = phi
                    .as_ref()
                    .map(|p| pot.bond_lengths.iter().map(|&r| p.value(r)).sum())
                    .unwrap_or(0.0);
                pot.reference_density = pot.bond_lengths.iter().map(|&r| density.value(r)).sum();
            }
            PotentialKind::HarmonicChain { .. } => {
                pot.kappa = f64::INFINITY;
            }
        }
        Ok(pot)
    }

    /// Pair potential with all directions `0 < |ρ| ≤ cutoff`.
    pub fn pair(phi: RadialFunction, orientation: DMatrix<f64>, cutoff: f64) -> Result<Self> {
        let stencil = StencilSet::new(orientation.nrows(), cutoff)?;
        Self::build(PotentialKind::Pair { phi }, orientation, stencil)
    }

    /// Embedded-atom potential with all directions `0 < |ρ| ≤ cutoff`.
    pub fn eam(
        phi: Option<RadialFunction>,
        density: RadialFunction,
        embedding: Polynomial,
        orientation: DMatrix<f64>,
        cutoff: f64,
    ) -> Result<Self> {
        let stencil = StencilSet::new(orientation.nrows(), cutoff)?;
        Self::build(
            PotentialKind::Eam {
                phi,
                density,
                embedding,
            },
            orientation,
            stencil,
        )
    }

    /// Harmonic chain with first and second neighbour springs `a1`, `a2`.
    pub fn harmonic_chain(a1: f64, a2: f64) -> Self {
        let stencil = StencilSet::new(1, 2.0).expect("valid stencil");
        Self::build(
            PotentialKind::HarmonicChain { a1, a2 },
            DMatrix::identity(1, 1),
            stencil,
        )
        .expect("valid chain")
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
        }
        if kappa.is_finite() {
            let min_margin = self
                .stencil
                .directions()
                .iter()
                .zip(&self.bond_lengths)
                .map(|(rho, &r)| r - kappa * rho.norm())
                .fold(f64::INFINITY, f64::min);
            if !matches!(self.kind, PotentialKind::HarmonicChain { .. }) && min_margin <= 0.0 {
                return Err(Error::Config(format!(
                    "kappa = {kappa} admits collapsed bonds"
                )));
            }
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn stencil(&self) -> &StencilSet {
        &self.stencil
    }

    pub fn dim(&self) -> usize {
        self.stencil.dim()
    }

    pub fn orientation(&self) -> &DMatrix<f64> {
        &self.orientation
    }

    /// `Aρ` for stencil direction `i`.
    pub fn bond(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.bonds[i * d..(i + 1) * d]
    }

    /// Highest derivative order available in closed form.
    pub fn max_derivative_order(&self) -> u32 {
        5
    }

    /// `true` if fifth derivatives are available (extended-time dynamics).
    pub fn supports_order_five(&self) -> bool {
        self.max_derivative_order() >= 5
    }

    /// Checks `max_ρ |g_ρ| / |ρ| ≤ κ`.
    pub fn check_admissible(&self, g: &[f64]) -> Result<()> {
        let d = self.dim();
        self.check_len(g)?;
        if self.kappa.is_infinite() {
            return Ok(());
        }
        for (i, rho) in self.stencil.directions().iter().enumerate() {
            let n = g[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt();
            let ratio = n / rho.norm();
            if !(ratio <= self.kappa) {
                return Err(Error::Inadmissible {
                    direction: rho.components().to_vec(),
                    ratio,
                    kappa: self.kappa,
                    site: None,
                });
            }
        }
        Ok(())
    }

    fn check_len(&self, g: &[f64]) -> Result<()> {
        let want = self.stencil.len() * self.dim();
        if g.len() != want {
            return Err(Error::Config(format!(
                "stencil has {} entries, expected {want}",
                g.len()
            )));
        }
        Ok(())
    }

    /// Bond vector `Aρ + g_ρ`, its length and unit direction.
    fn bond_state(&self, g: &[f64], i: usize) -> ([f64; 3], f64) {
        let d = self.dim();
        let mut y = [0.0; 3];
        let mut r2 = 0.0;
        for a in 0..d {
            y[a] = self.bonds[i * d + a] + g[i * d + a];
            r2 += y[a] * y[a];
        }
        let r = r2.sqrt();
        for v in y.iter_mut().take(d) {
            *v /= r;
        }
        (y, r)
    }

    fn density_sum(&self, density: &RadialFunction, g: &[f64]) -> f64 {
        (0..self.stencil.len())
            .map(|i| density.value(self.bond_state(g, i).1))
            .sum()
    }

    /// `V(g)` with `V(0) = 0`.
    pub fn site_energy(&self, g: &[f64]) -> Result<f64> {
        self.check_admissible(g)?;
        Ok(self.site_energy_unchecked(g))
    }

    fn site_energy_unchecked(&self, g: &[f64]) -> f64 {
        let n = self.stencil.len();
        match &self.kind {
            PotentialKind::Pair { phi } => {
                let s: f64 = (0..n).map(|i| phi.value(self.bond_state(g, i).1)).sum();
                0.5 * (s - self.reference_energy)
            }
            PotentialKind::Eam {
                phi,
                density,
                embedding,
            } => {
                let pair = phi
                    .as_ref()
                    .map(|p| {
                        (0..n).map(|i| p.value(self.bond_state(g, i).1)).sum::<f64>()
                            - self.reference_energy
                    })
                    .unwrap_or(0.0);
                let rho_bar = self.density_sum(density, g);
                pair + embedding.value(rho_bar) - embedding.value(self.reference_density)
            }
            PotentialKind::HarmonicChain { a1, a2 } => {
                let mut e = 0.0;
                for (i, rho) in self.stencil.directions().iter().enumerate() {
                    let a = if rho.components()[0].abs() == 1 { a1 } else { a2 };
                    e += 0.25 * a * g[i] * g[i];
                }
                e
            }
        }
    }

    /// `(V_ρ(g))_ρ`, flattened as `[ρ * d + i]`.
    pub fn site_gradient(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_admissible(g)?;
        let mut out = vec![0.0; g.len()];
        self.site_gradient_into(g, &mut out);
        Ok(out)
    }

    fn site_gradient_into(&self, g: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let n = self.stencil.len();
        match &self.kind {
            PotentialKind::Pair { phi } => {
                for i in 0..n {
                    let (u, r) = self.bond_state(g, i);
                    let c = 0.5 * phi.deriv(r, 1);
                    for a in 0..d {
                        out[i * d + a] = c * u[a];
                    }
                }
            }
            PotentialKind::Eam {
                phi,
                density,
                embedding,
            } => {
                let gp = embedding.deriv(self.density_sum(density, g), 1);
                for i in 0..n {
                    let (u, r) = self.bond_state(g, i);
                    let c = phi.as_ref().map(|p| p.deriv(r, 1)).unwrap_or(0.0)
                        + gp * density.deriv(r, 1);
                    for a in 0..d {
                        out[i * d + a] = c * u[a];
                    }
                }
            }
            PotentialKind::HarmonicChain { a1, a2 } => {
                for (i, rho) in self.stencil.directions().iter().enumerate() {
                    let a = if rho.components()[0].abs() == 1 { a1 } else { a2 };
                    out[i] = 0.5 * a * g[i];
                }
            }
        }
    }

    /// The block `V_ρς(g)` for stencil indices `i = ρ`, `j = ς`.
    pub fn site_hessian(&self, g: &[f64], i: usize, j: usize) -> Result<DMatrix<f64>> {
        Ok(self.site_hessian_all(g)?.block(i, j))
    }

    /// All second partial derivatives of `V` at `g`.
    pub fn site_hessian_all(&self, g: &[f64]) -> Result<SiteHessian> {
        self.check_admissible(g)?;
        Ok(self.site_hessian_unchecked(g))
    }

    fn site_hessian_unchecked(&self, g: &[f64]) -> SiteHessian {
        let d = self.dim();
        let n = self.stencil.len();
        let mut diag = vec![0.0; n * d * d];
        let mut coupling = None;
        let radial_block = |diag: &mut [f64], i: usize, u: &[f64; 3], r: f64, f1: f64, f2: f64| {
            for a in 0..d {
                for b in 0..d {
                    let nn = u[a] * u[b];
                    let id = if a == b { 1.0 } else { 0.0 };
                    diag[(i * d + a) * d + b] += f2 * nn + f1 / r * (id - nn);
                }
            }
        };
        match &self.kind {
            PotentialKind::Pair { phi } => {
                for i in 0..n {
                    let (u, r) = self.bond_state(g, i);
                    radial_block(&mut diag, i, &u, r, 0.5 * phi.deriv(r, 1), 0.5 * phi.deriv(r, 2));
                }
            }
            PotentialKind::Eam {
                phi,
                density,
                embedding,
            } => {
                let s = self.density_sum(density, g);
                let (g1, g2) = (embedding.deriv(s, 1), embedding.deriv(s, 2));
                let mut w = vec![0.0; n * d];
                for i in 0..n {
                    let (u, r) = self.bond_state(g, i);
                    let (mut f1, mut f2) = (g1 * density.deriv(r, 1), g1 * density.deriv(r, 2));
                    if let Some(p) = phi {
                        f1 += p.deriv(r, 1);
                        f2 += p.deriv(r, 2);
                    }
                    radial_block(&mut diag, i, &u, r, f1, f2);
                    let dpsi = density.deriv(r, 1);
                    for a in 0..d {
                        w[i * d + a] = dpsi * u[a];
                    }
                }
                if g2 != 0.0 {
                    coupling = Some((g2, w));
                }
            }
            PotentialKind::HarmonicChain { a1, a2 } => {
                for (i, rho) in self.stencil.directions().iter().enumerate() {
                    let a = if rho.components()[0].abs() == 1 { a1 } else { a2 };
                    diag[i] = 0.5 * a;
                }
            }
        }
        SiteHessian {
            dim: d,
            len: n,
            diag,
            coupling,
        }
    }

    fn neighbours(&self, lattice: &LatticeSpec) -> Result<Vec<usize>> {
        if lattice.dim() != self.dim() {
            return Err(Error::Config(format!(
                "potential is {}-dimensional, lattice is {}-dimensional",
                self.dim(),
                lattice.dim()
            )));
        }
        lattice.check_stencil(&self.stencil)?;
        let n = self.stencil.len();
        let mut table = vec![0; lattice.num_sites() * n];
        for site in 0..lattice.num_sites() {
            for (j, rho) in self.stencil.directions().iter().enumerate() {
                table[site * n + j] = lattice.shift(site, rho);
            }
        }
        Ok(table)
    }

    fn site_stencils(&self, u: &DisplacementField) -> Result<Vec<f64>> {
        let width = self.stencil.len() * self.dim();
        let mut all = vec![0.0; u.lattice().num_sites() * width];
        all.par_chunks_mut(width)
            .enumerate()
            .try_for_each(|(site, g)| {
                u.stencil_into(site, &self.stencil, g);
                self.check_admissible(g).map_err(|e| e.at_site(site))
            })?;
        Ok(all)
    }

    /// `E^a(u) = Σ_ξ V(Du(ξ))`.
    pub fn total_energy(&self, u: &DisplacementField) -> Result<f64> {
        self.neighbours(u.lattice())?;
        let width = self.stencil.len() * self.dim();
        let g = self.site_stencils(u)?;
        let per_site: Vec<f64> = g
            .par_chunks(width)
            .map(|g| self.site_energy_unchecked(g))
            .collect();
        Ok(pairwise_sum(&per_site))
    }

    /// `V_ρ(Du(ξ))` for every site, flattened as `[(site * n + ρ) * d + i]`.
    pub fn site_gradients(&self, u: &DisplacementField) -> Result<Vec<f64>> {
        self.neighbours(u.lattice())?;
        let width = self.stencil.len() * self.dim();
        let g = self.site_stencils(u)?;
        let mut out = vec![0.0; g.len()];
        out.par_chunks_mut(width)
            .zip(g.par_chunks(width))
            .for_each(|(o, g)| self.site_gradient_into(g, o));
        Ok(out)
    }

    /// `F(η) = -∂E^a/∂u(η)`.
    pub fn forces(&self, u: &DisplacementField) -> Result<DisplacementField> {
        let table = self.neighbours(u.lattice())?;
        let grads = self.site_gradients(u)?;
        Ok(self.gather(u.lattice(), &table, &grads, -1.0))
    }

    /// Assembles `Σ_ξ Σ_ρ w_ρ(ξ) · D_ρ v(ξ)` as a per-site dual vector, times `sign`.
    fn gather(&self, lattice: &LatticeSpec, table: &[usize], w: &[f64], sign: f64) -> DisplacementField {
        let d = self.dim();
        let n = self.stencil.len();
        let mut out = DisplacementField::zeros(lattice);
        out.values_mut()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(eta, f)| {
                for j in 0..n {
                    // bond (η - ρ) → η, looked up through the negated direction
                    let back = table[eta * n + self.stencil.negation_of(j)];
                    for a in 0..d {
                        f[a] += sign * (w[(back * n + j) * d + a] - w[(eta * n + j) * d + a]);
                    }
                }
            });
        out
    }

    /// Second variation `δ²E^a(u)` as a reusable operator.
    pub fn hessian(&self, u: &DisplacementField) -> Result<HessianOperator<'_>> {
        let table = self.neighbours(u.lattice())?;
        let width = self.stencil.len() * self.dim();
        let g = self.site_stencils(u)?;
        let blocks: Vec<SiteHessian> = g
            .par_chunks(width)
            .map(|g| self.site_hessian_unchecked(g))
            .collect();
        Ok(HessianOperator {
            potential: self,
            lattice: u.lattice().clone(),
            table,
            blocks,
        })
    }

    /// `δ²E^a(u) v`.
    pub fn hessian_apply(&self, u: &DisplacementField, v: &DisplacementField) -> Result<DisplacementField> {
        Ok(self.hessian(u)?.apply(v))
    }
}

/// All blocks `V_ρς` at one stencil: block-diagonal radial part plus an
/// optional rank-one coupling `c · w_ρ ⊗ w_ς` (EAM embedding).
#[derive(Debug, Clone)]
pub struct SiteHessian {
    dim: usize,
    len: usize,
    diag: Vec<f64>,
    coupling: Option<(f64, Vec<f64>)>,
}

impl SiteHessian {
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let d = self.dim;
        let mut m = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                if i == j {
                    m[(a, b)] = self.diag[(i * d + a) * d + b];
                }
                if let Some((c, w)) = &self.coupling {
                    m[(a, b)] += c * w[i * d + a] * w[j * d + b];
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Radial (block-diagonal) part of `V_ρρ`.
    pub fn diagonal_block(&self, i: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        &self.diag[i * d2..(i + 1) * d2]
    }

    /// Rank-one coupling `(c, w)` contributing `c · w_ρ ⊗ w_ς`, if present.
    pub fn coupling(&self) -> Option<(f64, &[f64])> {
        self.coupling.as_ref().map(|(c, w)| (*c, w.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `out_ρ = Σ_ς V_ρς x_ς`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..self.len {
            for a in 0..d {
                out[i * d + a] = (0..d).map(|b| self.diag[(i * d + a) * d + b] * x[i * d + b]).sum();
            }
        }
        if let Some((c, w)) = &self.coupling {
            let s: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
            for (o, w) in out.iter_mut().zip(w) {
                *o += c * s * w;
            }
        }
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        y.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// `v ↦ δ²E^a(u) v` with per-site blocks cached.
#[derive(Debug, Clone)]
pub struct HessianOperator<'a> {
    potential: &'a Potential,
    lattice: LatticeSpec,
    table: Vec<usize>,
    blocks: Vec<SiteHessian>,
}

impl HessianOperator<'_> {
    pub fn site(&self, site: usize) -> &SiteHessian {
        &self.blocks[site]
    }

    pub fn apply(&self, v: &DisplacementField) -> DisplacementField {
        let p = self.potential;
        let width = p.stencil.len() * p.dim();
        let mut w = vec![0.0; self.lattice.num_sites() * width];
        w.par_chunks_mut(width).enumerate().for_each(|(site, w)| {
            let mut dv = vec![0.0; width];
            v.stencil_into(site, &p.stencil, &mut dv);
            self.blocks[site].apply(&dv, w);
        });
        p.gather(&self.lattice, &self.table, &w, 1.0)
    }

    /// `⟨δ²E^a(u) v, v⟩`.
    pub fn quadratic(&self, v: &DisplacementField) -> f64 {
        self.apply(v).dot(v)
    }
}

/// Deterministic pairwise summation.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Potential definition as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Pair {
        phi: RadialFunction,
        cutoff: f64,
        #[serde(default)]
        kappa: Option<f64>,
    },
    Eam {
        #[serde(default)]
        phi: Option<RadialFunction>,
        density: RadialFunction,
        embedding: Polynomial,
        cutoff: f64,
        #[serde(default)]
        kappa: Option<f64>,
    },
    HarmonicChain {
        a1: f64,
        a2: f64,
        #[serde(default)]
        kappa: Option<f64>,
    },
}

impl PotentialSpec {
    pub fn kappa(&self) -> Option<f64> {
        match self {
            Self::Pair { kappa, .. } | Self::Eam { kappa, .. } | Self::HarmonicChain { kappa, .. } => *kappa,
        }
    }

    pub fn build(&self, orientation: &DMatrix<f64>) -> Result<Potential> {
        let pot = match self {
            Self::Pair { phi, cutoff, .. } => Potential::pair(phi.clone(), orientation.clone(), *cutoff)?,
            Self::Eam {
                phi,
                density,
                embedding,
                cutoff,
                ..
            } => Potential::eam(
                phi.clone(),
                density.clone(),
                embedding.clone(),
                orientation.clone(),
                *cutoff,
            )?,
            Self::HarmonicChain { a1, a2, .. } => {
                if orientation.nrows() != 1 {
                    return Err(Error::Config("harmonic chain requires d = 1".into()));
                }
                Potential::harmonic_chain(*a1, *a2)
            }
        };
        match self.kappa() {
            Some(k) => pot.with_kappa(k),
            None => Ok(pot),
        }
    }
}
