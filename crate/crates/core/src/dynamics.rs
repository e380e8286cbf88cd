//! Atomistic Newtonian dynamics, the Cauchy–Born wave equation, dynamic
//! error tracking and the zone-boundary blow-up demonstration.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::continuum::{CbGrid, SpectralGrid};
use crate::error::{Error, Result};
use crate::fourier::{fftn, frequency, grid_coords, FourierField, TrigInterpolant};
use crate::harness::rate::{fit_rate, RateReport};
use crate::lattice::{DisplacementField, LatticeSpec};
use crate::potentials::Potential;
use crate::stability::{alternating_strain, legendre_hadamard_min, max_frequency};
use crate::statics::{check_scale, interpolation_mismatch, quasi_interpolate_grid};
use crate::stress::{grad_matrix, CbModel};

/// Macroscopic initial displacement `U₀` and velocity `U₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: FourierField,
    pub u1: FourierField,
}

impl InitialData {
    pub fn new(u0: FourierField, u1: FourierField) -> Result<Self> {
        if u0.dim != u1.dim {
            return Err(Error::Config("initial displacement and velocity dimensions differ".into()));
        }
        Ok(Self {
            u0: u0.validated()?,
            u1: u1.validated()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.u0.dim
    }

    /// `ũ^c(0)` and its velocity sampled at the lattice sites of `lattice`,
    /// `u^a_0(ξ) = ε⁻¹ (ζ_ε * U₀)(εξ)`, `u^a_1(ξ) = (ζ_ε * U₁)(εξ)`.
    pub fn lattice_data(&self, lattice: &LatticeSpec) -> Result<(DisplacementField, DisplacementField)> {
        let eps = 1.0 / lattice.cells() as f64;
        let s0 = self.u0.convolved_with_hat(eps);
        let s1 = self.u1.convolved_with_hat(eps);
        let scaled = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| v * eps).collect() };
        let u = DisplacementField::from_fn(lattice, |x| s0.value(&scaled(x)).into_iter().map(|v| v / eps).collect());
        let v = DisplacementField::from_fn(lattice, |x| s1.value(&scaled(x)));
        Ok((u, v))
    }
}

/// Time-stepping controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsOptions {
    /// Atomistic step as a fraction of `1 / ω_max`.
    pub dt_factor: f64,
    /// Continuum step as a fraction of `Δx / c_max`.
    pub cfl: f64,
    /// Explicit microscopic atomistic step, overriding `dt_factor`.
    pub dt: Option<f64>,
    /// Explicit macroscopic continuum step, overriding `cfl`.
    pub dt_continuum: Option<f64>,
    /// Continuum grid points per axis.
    pub grid: usize,
    /// Number of equally spaced macroscopic checkpoints after `t = 0`.
    pub checkpoints: usize,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            dt_factor: 0.2,
            cfl: 0.2,
            dt: None,
            dt_continuum: None,
            grid: 256,
            checkpoints: 20,
        }
    }
}

impl DynamicsOptions {
    /// The same run with both time steps halved.
    pub fn halved(&self, p: &Potential, model: &CbModel, data: &InitialData) -> Result<Self> {
        let dt = self.dt.unwrap_or(self.dt_factor / max_frequency(p)?);
        let grid = SpectralGrid::new(self.grid, data.dim())?;
        let dtc = match self.dt_continuum {
            Some(v) => v,
            None => self.cfl / grid.n() as f64 / max_wave_speed(model, &grid, &grid.sample(&data.u0))?,
        };
        Ok(Self {
            dt: Some(0.5 * dt),
            dt_continuum: Some(0.5 * dtc),
            ..self.clone()
        })
    }
}

/// Lattice trajectory recorded at checkpoints.
#[derive(Debug, Clone)]
pub struct LatticeTrajectory {
    /// Microscopic times of the recorded states, starting at 0.
    pub times: Vec<f64>,
    pub u: Vec<DisplacementField>,
    pub v: Vec<DisplacementField>,
    /// `E^a(u) + ½‖u̇‖²`.
    pub energy: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl LatticeTrajectory {
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str(&format!("# {h}\n"));
        }
        s.push_str("time,energy,velocity_norm\n");
        for ((t, e), v) in self.times.iter().zip(&self.energy).zip(&self.v) {
            s.push_str(&format!("{t:.17e},{e:.17e},{:.17e}\n", v.l2_norm()));
        }
        s
    }
}

fn lattice_energy(p: &Potential, u: &DisplacementField, v: &DisplacementField) -> Result<f64> {
    Ok(p.total_energy(u)? + 0.5 * v.dot(v))
}

/// Velocity Verlet with unit masses; records every `every` steps, `records`
/// times. Admissibility is checked at every force evaluation.
pub fn velocity_verlet(
    p: &Potential,
    u0: &DisplacementField,
    v0: &DisplacementField,
    dt: f64,
    every: usize,
    records: usize,
) -> Result<LatticeTrajectory> {
    if !(dt > 0.0) || every == 0 {
        return Err(Error::Config(format!("invalid time step {dt} / record interval {every}")));
    }
    let mut warnings = Vec::new();
    let omega = max_frequency(p)?;
    if dt * omega > 2.0 {
        warnings.push(format!("dt = {dt} exceeds the Verlet stability limit 2/omega_max = {}", 2.0 / omega));
    }
    let mut u = u0.clone();
    let mut v = v0.clone();
    let mut a = p.forces(&u)?;
    let mut out = LatticeTrajectory {
        times: vec![0.0],
        u: vec![u.clone()],
        v: vec![v.clone()],
        energy: vec![lattice_energy(p, &u, &v)?],
        dt,
        steps: 0,
        warnings: Vec::new(),
    };
    let mut step = 0usize;
    for _ in 0..records {
        for _ in 0..every {
            v.axpy(0.5 * dt, &a);
            u.axpy(dt, &v);
            step += 1;
            let t = step as f64 * dt;
            a = p.forces(&u).map_err(|e| Error::TrajectoryAborted {
                time: t,
                source: Box::new(e),
            })?;
            v.axpy(0.5 * dt, &a);
        }
        out.times.push(step as f64 * dt);
        out.energy.push(lattice_energy(p, &u, &v)?);
        out.u.push(u.clone());
        out.v.push(v.clone());
    }
    out.steps = step;
    out.warnings = warnings;
    Ok(out)
}

fn lattice_for(p: &Potential, eps: f64) -> Result<LatticeSpec> {
    let n = (1.0 / eps).round() as usize;
    let lattice = LatticeSpec::new(p.dim(), p.orientation().clone(), n)?;
    check_scale(eps, &lattice)?;
    Ok(lattice)
}

/// Integrates the atomistic system to microscopic time `T_macro / ε` from
/// data sampled off the quasi-interpolated macroscopic fields.
pub fn integrate_atomistic(p: &Potential, data: &InitialData, eps: f64, t_macro: f64, opts: &DynamicsOptions) -> Result<LatticeTrajectory> {
    if data.dim() != p.dim() {
        return Err(Error::Config("initial data and potential dimensions differ".into()));
    }
    let lattice = lattice_for(p, eps)?;
    let (u0, v0) = data.lattice_data(&lattice)?;
    let k = opts.checkpoints.max(1);
    let interval = t_macro / eps / k as f64;
    let dt = opts.dt.unwrap_or(opts.dt_factor / max_frequency(p)?);
    let every = (interval / dt).ceil().max(1.0) as usize;
    velocity_verlet(p, &u0, &v0, interval / every as f64, every, k)
}

/// Continuum trajectory recorded at checkpoints.
#[derive(Debug, Clone)]
pub struct ContinuumTrajectory {
    pub grid: SpectralGrid,
    /// Macroscopic times.
    pub times: Vec<f64>,
    /// Component-major grid values per checkpoint.
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// `½‖U̇‖² + ∫W(∇U)`.
    pub energy: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub max_gradient: f64,
}

impl ContinuumTrajectory {
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    fn interpolants(&self, values: &[f64]) -> Vec<TrigInterpolant> {
        let pts = self.grid.points();
        (0..self.grid.dim())
            .map(|i| TrigInterpolant::new(&values[i * pts..(i + 1) * pts], self.grid.n(), self.grid.dim()))
            .collect()
    }
}

/// `sqrt` of the largest modulus eigenvalue of `ℂ(∇U)` over the grid.
fn max_wave_speed(model: &CbModel, grid: &SpectralGrid, u: &[f64]) -> Result<f64> {
    let d = grid.dim();
    let cb = CbGrid { model, grid };
    let m = cb.moduli(&grid.gradient(u))?;
    let dd = d * d;
    let best = m
        .chunks(dd * dd)
        .map(|c| {
            let mat = DMatrix::from_row_slice(dd, dd, c);
            SymmetricEigen::new(mat).eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
        })
        .fold(0.0f64, f64::max);
    if !(best > 0.0) {
        return Err(Error::Instability("Cauchy–Born moduli vanish; no wave speed".into()));
    }
    Ok(best.sqrt())
}

/// Fraction of the spectral gradient energy carried by the top third of
/// the resolved modes.
fn high_mode_fraction(grid: &SpectralGrid, u: &[f64]) -> f64 {
    let n = grid.n();
    let d = grid.dim();
    let pts = grid.points();
    let (mut hi, mut total) = (0.0, 0.0);
    for i in 0..d {
        let mut c: Vec<num_complex::Complex64> = u[i * pts..(i + 1) * pts]
            .iter()
            .map(|&v| num_complex::Complex64::new(v, 0.0))
            .collect();
        fftn(&mut c, n, d, false);
        for (idx, z) in c.iter().enumerate() {
            let g = grid_coords(idx, n, d);
            let m: Vec<i64> = (0..d).map(|a| frequency(g[a], n)).collect();
            let k2: f64 = m.iter().map(|&v| (v * v) as f64).sum();
            let e = z.norm_sqr() * k2;
            total += e;
            if m.iter().any(|&v| 3 * v.unsigned_abs() as usize > n) {
                hi += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        hi / total
    }
}

/// Leapfrog in time with spectral `div S^c(∇U)` for `Ü = div S^c(∇U)`.
pub fn solve_cb_wave(model: &CbModel, data: &InitialData, t_macro: f64, opts: &DynamicsOptions) -> Result<ContinuumTrajectory> {
    let d = data.dim();
    if model.dim() != d {
        return Err(Error::Config("initial data and model dimensions differ".into()));
    }
    let grid = SpectralGrid::new(opts.grid, d)?;
    let cb = CbGrid { model, grid: &grid };
    let kappa = model.potential().kappa();
    let mut u = grid.sample(&data.u0);
    let mut v = grid.sample(&data.u1);

    let g0 = grid.gradient(&u);
    let lh: Vec<f64> = (0..grid.points())
        .into_par_iter()
        .map(|p| legendre_hadamard_min(model, &grad_matrix(&g0[p * d * d..(p + 1) * d * d], d)))
        .collect::<Result<_>>()?;
    if let Some(bad) = lh.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Instability(format!("Legendre–Hadamard condition fails at the initial state ({bad})")));
    }

    let k = opts.checkpoints.max(1);
    let interval = t_macro / k as f64;
    let dt0 = match opts.dt_continuum {
        Some(v) => v,
        None => opts.cfl / grid.n() as f64 / max_wave_speed(model, &grid, &u)?,
    };
    let every = (interval / dt0).ceil().max(1.0) as usize;
    let dt = interval / every as f64;
    let w = grid.weight();
    let energy = |u: &[f64], v: &[f64]| -> Result<f64> {
        Ok(0.5 * w * v.iter().map(|x| x * x).sum::<f64>() + cb.energy(&grid.gradient(u))?)
    };
    let accel = |u: &[f64], t: f64| -> Result<Vec<f64>> {
        let grad = grid.gradient(u);
        let gmax = cb.max_gradient(&grad);
        if !gmax.is_finite() {
            return Err(Error::Numerical(format!("continuum solution blew up at T = {t}")));
        }
        if gmax >= kappa {
            return Err(Error::Instability(format!(
                "continuum gradient {gmax} reached kappa = {kappa} at T = {t}"
            )));
        }
        Ok(grid.project(&grid.divergence(&cb.stress(&grad)?)))
    };

    let mut out = ContinuumTrajectory {
        grid: grid.clone(),
        times: vec![0.0],
        u: vec![u.clone()],
        v: vec![v.clone()],
        energy: vec![energy(&u, &v)?],
        dt,
        steps: 0,
        max_gradient: cb.max_gradient(&g0),
    };
    let mut a = accel(&u, 0.0)?;
    let mut step = 0usize;
    for _ in 0..k {
        for _ in 0..every {
            for (vi, ai) in v.iter_mut().zip(&a) {
                *vi += 0.5 * dt * ai;
            }
            for (ui, vi) in u.iter_mut().zip(&v) {
                *ui += dt * vi;
            }
            step += 1;
            a = accel(&u, step as f64 * dt)?;
            for (vi, ai) in v.iter_mut().zip(&a) {
                *vi += 0.5 * dt * ai;
            }
        }
        let t = step as f64 * dt;
        let frac = high_mode_fraction(&grid, &u);
        if frac > 1e-3 {
            return Err(Error::Numerical(format!(
                "spectral coefficients blew up at T = {t}: {frac:.3e} of the gradient energy in the top third of modes"
            )));
        }
        out.max_gradient = out.max_gradient.max(cb.max_gradient(&grid.gradient(&u)));
        out.times.push(t);
        out.energy.push(energy(&u, &v)?);
        out.u.push(u.clone());
        out.v.push(v.clone());
    }
    out.steps = step;
    Ok(out)
}

/// `ε^{d/2}(‖∇Iu^a - ∇u^c‖ + ‖Iu̇^a - u̇^c‖)` at every shared checkpoint.
pub fn dynamic_error(atomistic: &LatticeTrajectory, continuum: &ContinuumTrajectory, eps: f64) -> Result<Vec<f64>> {
    if atomistic.times.len() != continuum.times.len() {
        return Err(Error::Config("trajectories have different checkpoints".into()));
    }
    (0..atomistic.times.len())
        .map(|j| {
            let iu = continuum.interpolants(&continuum.u[j]);
            let iv = continuum.interpolants(&continuum.v[j]);
            let (g, v) = interpolation_mismatch(&iu, &atomistic.u[j], Some((&iv, &atomistic.v[j])), eps)?;
            Ok(g + v)
        })
        .collect()
}

/// Frozen-Hessian error energy `ε^d (‖ė‖² + ⟨δ²E^a(u^a) e, e⟩)` with
/// `e = u^a - ũ^c` at every shared checkpoint.
pub fn hessian_error_energy(
    p: &Potential,
    atomistic: &LatticeTrajectory,
    continuum: &ContinuumTrajectory,
    eps: f64,
) -> Result<Vec<f64>> {
    if atomistic.times.len() != continuum.times.len() {
        return Err(Error::Config("trajectories have different checkpoints".into()));
    }
    (0..atomistic.times.len())
        .map(|j| {
            let ua = &atomistic.u[j];
            let lattice = ua.lattice();
            check_scale(eps, lattice)?;
            let mut e = ua.clone();
            e.axpy(-1.0, &quasi_interpolate_grid(&continuum.grid, &continuum.u[j], lattice, 1.0 / eps)?);
            let mut ed = atomistic.v[j].clone();
            ed.axpy(-1.0, &quasi_interpolate_grid(&continuum.grid, &continuum.v[j], lattice, 1.0)?);
            let h = p.hessian(ua)?.quadratic(&e);
            Ok(eps.powi(lattice.dim() as i32) * (ed.dot(&ed) + h))
        })
        .collect()
}

/// One member of a dynamic sweep.
#[derive(Debug, Clone, Serialize)]
pub struct DynamicRun {
    pub eps: f64,
    pub cells: usize,
    /// Maximum over the checkpoints.
    pub error: f64,
    /// The same metric with both time steps halved.
    pub error_half_dt: f64,
    pub dt: f64,
    pub steps: usize,
    pub energy_drift: f64,
}

/// Result of [`dynamic_error_sweep`].
#[derive(Debug, Clone, Serialize)]
pub struct DynamicSweep {
    pub runs: Vec<DynamicRun>,
    pub rate: RateReport,
    /// Largest relative change of the error under the half-step control.
    pub half_dt_change: f64,
    pub continuum_energy_drift: f64,
}

impl DynamicSweep {
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str(&format!("# {h}\n"));
        }
        s.push_str(&format!("# slope {:.6} half_dt_change {:.6e}\n", self.rate.slope, self.half_dt_change));
        s.push_str("eps,cells,error,error_half_dt,dt,steps,energy_drift\n");
        for r in &self.runs {
            s.push_str(&format!(
                "{:.17e},{},{:.17e},{:.17e},{:.17e},{},{:.17e}\n",
                r.eps, r.cells, r.error, r.error_half_dt, r.dt, r.steps, r.energy_drift
            ));
        }
        s
    }
}

/// Runs both integrators for every supercell, records the max-over-time
/// error, repeats with halved steps and fits the rate.
pub fn dynamic_error_sweep(
    p: &Potential,
    data: &InitialData,
    cells: &[usize],
    t_macro: f64,
    opts: &DynamicsOptions,
) -> Result<DynamicSweep> {
    if cells.len() < 3 {
        return Err(Error::RateFit(format!("need at least 3 eps values, have {}", cells.len())));
    }
    let model = CbModel::new(p.clone());
    let half = opts.halved(p, &model, data)?;
    let (cb, cb_half) = rayon::join(
        || solve_cb_wave(&model, data, t_macro, opts),
        || solve_cb_wave(&model, data, t_macro, &half),
    );
    let (cb, cb_half) = (cb?, cb_half?);
    let runs: Vec<DynamicRun> = cells
        .par_iter()
        .map(|&n| {
            let eps = 1.0 / n as f64;
            let (at, at_half) = rayon::join(
                || integrate_atomistic(p, data, eps, t_macro, opts),
                || integrate_atomistic(p, data, eps, t_macro, &half),
            );
            let (at, at_half) = (at?, at_half?);
            let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
            Ok(DynamicRun {
                eps,
                cells: n,
                error: max(dynamic_error(&at, &cb, eps)?),
                error_half_dt: max(dynamic_error(&at_half, &cb_half, eps)?),
                dt: at.dt,
                steps: at.steps,
                energy_drift: at.energy_drift(),
            })
        })
        .collect::<Result<_>>()?;
    let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    let errors: Vec<f64> = runs.iter().map(|r| r.error).collect();
    let rate = fit_rate(&eps, &errors, None)?;
    let half_dt_change = runs
        .iter()
        .map(|r| (r.error_half_dt - r.error).abs() / r.error)
        .fold(0.0, f64::max);
    Ok(DynamicSweep {
        runs,
        rate,
        half_dt_change,
        continuum_energy_drift: cb.energy_drift(),
    })
}

/// Initial velocity profile of the blow-up demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeProfile {
    /// Zone-boundary alternating strain.
    Alternating,
    /// Longest periodic cosine wave.
    LongWave,
}

/// Growth of `‖u̇(t)‖` against the bound `ε² ½ eᵗ`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub eps: f64,
    pub profile: ProbeProfile,
    pub window: (f64, f64),
    /// `min ‖u̇(t)‖ / (ε² ½ eᵗ)` over the window.
    pub min_growth_ratio: f64,
    /// `max ‖u̇(t)‖ / ε²` over `[0, 3|log ε|]`.
    pub max_velocity_ratio: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub velocity_norms: Vec<f64>,
    /// `max |U|` of the Cauchy–Born solution with zero data over the window.
    pub continuum_max: f64,
}

impl GrowthReport {
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str(&format!("# {h}\n"));
        }
        s.push_str("time,velocity_norm,bound\n");
        let e2 = self.eps * self.eps;
        for (t, v) in self.times.iter().zip(&self.velocity_norms) {
            s.push_str(&format!("{t:.17e},{v:.17e},{:.17e}\n", 0.5 * e2 * t.exp()));
        }
        s
    }
}

/// Harmonic chain with `u(0) = 0`, `u̇(0) = ε² ψ` for the unit-ℓ² probe `ψ`,
/// integrated over `[0, 3|log ε|]` in microscopic time.
pub fn instability_demo(a1: f64, a2: f64, cells: usize, profile: ProbeProfile, dt: Option<f64>) -> Result<GrowthReport> {
    let p = Potential::harmonic_chain(a1, a2);
    let lattice = LatticeSpec::cubic(1, cells)?;
    let eps = 1.0 / cells as f64;
    let mut psi = match profile {
        ProbeProfile::Alternating => alternating_strain(&lattice)?,
        ProbeProfile::LongWave => DisplacementField::from_fn(&lattice, |x| vec![(2.0 * PI * x[0] * eps).cos()]),
    };
    psi.scale(eps * eps / psi.l2_norm());
    let t_end = 3.0 * eps.ln().abs();
    let dt = dt.unwrap_or((0.02 / max_frequency(&p)?).min(0.01));
    let steps = (t_end / dt).ceil() as usize;
    let dt = t_end / steps as f64;
    let traj = velocity_verlet(&p, &DisplacementField::zeros(&lattice), &psi, dt, 1, steps)?;
    let e2 = eps * eps;
    let norms: Vec<f64> = traj.v.iter().map(|v| v.l2_norm()).collect();
    let min_growth_ratio = traj
        .times
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= 1.0 - 1e-12)
        .map(|(t, v)| v / (0.5 * e2 * t.exp()))
        .fold(f64::INFINITY, f64::min);
    let max_velocity_ratio = norms.iter().fold(0.0f64, |a, v| a.max(v / e2));

    let model = CbModel::new(p.clone());
    let zero = InitialData::new(FourierField::zero(1), FourierField::zero(1))?;
    let cb = solve_cb_wave(
        &model,
        &zero,
        t_end * eps,
        &DynamicsOptions {
            grid: 16,
            checkpoints: 4,
            dt_continuum: Some(t_end * eps / 64.0),
            ..DynamicsOptions::default()
        },
    )?;
    let continuum_max = cb.u.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(GrowthReport {
        eps,
        profile,
        window: (1.0, t_end),
        min_growth_ratio,
        max_velocity_ratio,
        dt,
        times: traj.times,
        velocity_norms: norms,
        continuum_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::RadialFunction;
    use crate::stability::DispersionSpectrum;

    fn lj_chain() -> Potential {
        Potential::pair(RadialFunction::lennard_jones(), DMatrix::identity(1, 1), 2.0)
            .unwrap()
            .with_kappa(0.4)
            .unwrap()
    }

    #[test]
    fn hessian_error_energy_tracks_the_dynamic_error() {
        let p = Potential::harmonic_chain(2.0, -0.25);
        let model = CbModel::new(p.clone());
        let data = InitialData::new(FourierField::sine(vec![1], vec![1.0], 0.01), FourierField::zero(1)).unwrap();
        let opts = DynamicsOptions { checkpoints: 3, ..Default::default() };
        let eps = 1.0 / 32.0;
        let at = integrate_atomistic(&p, &data, eps, 0.5, &opts).unwrap();
        let cb = solve_cb_wave(&model, &data, 0.5, &opts).unwrap();
        let energy = hessian_error_energy(&p, &at, &cb, eps).unwrap();
        let err = dynamic_error(&at, &cb, eps).unwrap();
        assert!(energy[0] < 1e-20, "{energy:?}");
        for (e, r) in energy.iter().zip(&err).skip(1) {
            let ratio = e / (r * r);
            assert!(*e > 0.0 && ratio > 0.1 && ratio < 10.0, "{e} {r}");
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let p = lj_chain();
        let zero = InitialData::new(FourierField::zero(1), FourierField::zero(1)).unwrap();
        let opts = DynamicsOptions { checkpoints: 2, ..Default::default() };
        let at = integrate_atomistic(&p, &zero, 1.0 / 16.0, 0.05, &opts).unwrap();
        assert!(at.u.iter().chain(&at.v).all(|f| f.values().iter().all(|v| *v == 0.0)));
        let cb = solve_cb_wave(&CbModel::new(p), &zero, 0.05, &opts).unwrap();
        assert!(cb.u.iter().chain(&cb.v).all(|f| f.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn harmonic_mode_oscillates_at_dispersion_frequency() {
        let p = Potential::harmonic_chain(2.0, -0.25);
        let n = 16;
        let lat = LatticeSpec::cubic(1, n).unwrap();
        let m = 3;
        let k = 2.0 * PI * m as f64 / n as f64;
        let omega2 = 2.0 * 4.0 * (k / 2.0).sin().powi(2) - 0.25 * 4.0 * k.sin().powi(2);
        let spec = DispersionSpectrum::compute(&p, 64).unwrap();
        assert!(spec.points.iter().all(|pt| pt.eigenvalues[0] >= 0.0));
        let u0 = DisplacementField::from_fn(&lat, |x| vec![(k * x[0]).cos()]);
        let v0 = DisplacementField::zeros(&lat);
        let omega = omega2.sqrt();
        let t_end = 5.0;
        let mut errs = Vec::new();
        for dt in [0.02, 0.01] {
            let steps = (t_end / dt) as usize;
            let tr = velocity_verlet(&p, &u0, &v0, dt, steps, 1).unwrap();
            let exact = DisplacementField::from_fn(&lat, |x| vec![(k * x[0]).cos() * (omega * t_end).cos()]);
            let mut diff = tr.u[1].clone();
            diff.axpy(-1.0, &exact);
            errs.push(diff.l2_norm());
        }
        assert!(errs[0] < 1e-3, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn verlet_energy_drift_is_second_order_and_reversible() {
        let p = lj_chain();
        let lat = LatticeSpec::cubic(1, 32).unwrap();
        let u0 = DisplacementField::from_fn(&lat, |x| vec![0.3 * (2.0 * PI * x[0] / 32.0).sin()]);
        let v0 = DisplacementField::from_fn(&lat, |x| vec![0.05 * (4.0 * PI * x[0] / 32.0).cos()]);
        let omega = max_frequency(&p).unwrap();
        let dt = 0.2 / omega;
        let t = 10.0;
        let coarse = velocity_verlet(&p, &u0, &v0, dt, (t / dt) as usize, 1).unwrap();
        let fine = velocity_verlet(&p, &u0, &v0, dt / 2.0, 2 * (t / dt) as usize, 1).unwrap();
        let ratio = coarse.energy_drift() / fine.energy_drift();
        assert!(ratio > 3.0 && ratio < 5.0, "{ratio}");

        let mut back_v = coarse.v[1].clone();
        back_v.scale(-1.0);
        let back = velocity_verlet(&p, &coarse.u[1], &back_v, dt, coarse.steps, 1).unwrap();
        let mut diff = back.u[1].clone();
        diff.axpy(-1.0, &u0);
        assert!(diff.l2_norm() < 1e-9, "{}", diff.l2_norm());
    }

    #[test]
    fn admissibility_loss_aborts_with_time() {
        let p = lj_chain().with_kappa(0.05).unwrap();
        let lat = LatticeSpec::cubic(1, 8).unwrap();
        let v0 = DisplacementField::from_fn(&lat, |x| vec![if x[0] as i64 % 2 == 0 { 1.0 } else { -1.0 }]);
        let err = velocity_verlet(&p, &DisplacementField::zeros(&lat), &v0, 0.01, 100, 1).unwrap_err();
        match err {
            Error::TrajectoryAborted { time, .. } => assert!(time > 0.0 && time < 1.0),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn cb_wave_reproduces_dalembert() {
        let p = Potential::harmonic_chain(2.0, -0.25);
        let u0 = FourierField::sine(vec![2], vec![1.0], 0.01);
        let data = InitialData::new(u0.clone(), FourierField::zero(1)).unwrap();
        let t = 0.3;
        let tr = solve_cb_wave(&CbModel::new(p), &data, t, &DynamicsOptions { grid: 16, dt_continuum: Some(1e-4), ..Default::default() }).unwrap();
        let last = tr.u.last().unwrap();
        for (j, v) in last.iter().enumerate() {
            let x = j as f64 / 16.0;
            // speed 1: (U₀(x - t) + U₀(x + t)) / 2
            let exact = 0.5 * (u0.value(&[x - t])[0] + u0.value(&[x + t])[0]);
            assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
        }
        assert!(tr.energy_drift() < 1e-5 * tr.energy[0]);
    }

    #[test]
    fn unstable_chain_grows_and_stable_chain_stays_bounded() {
        let bad = instability_demo(-1.0, 0.5, 64, ProbeProfile::Alternating, None).unwrap();
        assert!(bad.min_growth_ratio >= 1.0, "{}", bad.min_growth_ratio);
        assert_eq!(bad.continuum_max, 0.0);
        let good = instability_demo(2.0, -0.25, 64, ProbeProfile::Alternating, None).unwrap();
        assert!(good.max_velocity_ratio <= 2.0, "{}", good.max_velocity_ratio);
        let long = instability_demo(-1.0, 0.5, 64, ProbeProfile::LongWave, None).unwrap();
        assert!(long.max_velocity_ratio <= 1.0 + 1e-9, "{}", long.max_velocity_ratio);
    }
}
