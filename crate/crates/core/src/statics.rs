//! Scaled forces, Cauchy–Born and atomistic equilibrium solvers, and the
//! static ε² error measurement.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::continuum::{CbGrid, SpectralGrid, SpectralPreconditioner};
use crate::error::{Error, Result};
use crate::fourier::{fftn, grid_coords, FourierField, TrigInterpolant};
use crate::harness::rate::{fit_rate, RateReport};
use crate::interpolation::{quasi_interp, quasi_interp_grad, smooth_nodal_interp};
use crate::lattice::{DisplacementField, LatticeSpec};
use crate::potentials::Potential;
use crate::quadrature::GaussLegendre;
use crate::solvers::{dot, norm, pcg};
use crate::stability::dynamical_symbol;
use crate::stress::CbModel;

/// Macroscopic body force `δ · shape(X)` on the unit torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroForce {
    pub shape: FourierField,
    pub delta: f64,
}

impl MacroForce {
    pub fn new(shape: FourierField, delta: f64) -> Result<Self> {
        let shape = shape.validated()?;
        if !shape.is_zero_mean() {
            return Err(Error::Config("macroscopic force must have zero mean".into()));
        }
        if !delta.is_finite() {
            return Err(Error::Config(format!("invalid force amplitude {delta}")));
        }
        Ok(Self { shape, delta })
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    /// `F^c` itself.
    pub fn field(&self) -> FourierField {
        self.shape.scaled(self.delta)
    }
}

/// Microscopic forces for one supercell.
#[derive(Debug, Clone)]
pub struct LatticeForces {
    pub eps: f64,
    macro_field: FourierField,
    /// `f^a(ξ) = ∫ ζ(ξ - x) f^c(x) dx`.
    pub atomistic: DisplacementField,
}

impl LatticeForces {
    /// `f^c(x) = ε F^c(εx)` at a microscopic point.
    pub fn continuum_at(&self, x: &[f64]) -> Vec<f64> {
        let xs: Vec<f64> = x.iter().map(|v| v * self.eps).collect();
        self.macro_field.value(&xs).into_iter().map(|v| v * self.eps).collect()
    }
}

/// Builds `f^c` and `f^a` on the lattice with `N = 1/ε` cells per axis. The
/// convolution with `ζ` is evaluated exactly in Fourier space.
pub fn make_forces(force: &MacroForce, eps: f64, lattice: &LatticeSpec) -> Result<LatticeForces> {
    check_scale(eps, lattice)?;
    if force.dim() != lattice.dim() {
        return Err(Error::Config("force and lattice dimensions differ".into()));
    }
    let field = force.field();
    let smoothed = field.convolved_with_hat(eps);
    let atomistic = DisplacementField::from_fn(lattice, |xi| {
        let xs: Vec<f64> = xi.iter().map(|v| v * eps).collect();
        smoothed.value(&xs).into_iter().map(|v| v * eps).collect()
    });
    Ok(LatticeForces {
        eps,
        macro_field: field,
        atomistic,
    })
}

pub(crate) fn check_scale(eps: f64, lattice: &LatticeSpec) -> Result<()> {
    if !(eps > 0.0) || (eps * lattice.cells() as f64 - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "eps = {eps} does not match a supercell of {} cells",
            lattice.cells()
        )));
    }
    Ok(())
}

/// Solver controls shared by the static pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaticOptions {
    /// Continuum residual tolerance (L² norm).
    pub tol_r: f64,
    /// Atomistic force-residual tolerance (ℓ² norm).
    pub tol_a: f64,
    pub max_newton: usize,
    pub max_cg: usize,
    /// Continuum grid points per axis.
    pub grid: usize,
    /// Random probes for the a-posteriori stability check.
    pub probes: usize,
    pub seed: u64,
}

impl Default for StaticOptions {
    fn default() -> Self {
        Self {
            tol_r: 1e-10,
            tol_a: 1e-10,
            max_newton: 50,
            max_cg: 2000,
            grid: 64,
            probes: 8,
            seed: 0,
        }
    }
}

/// Cauchy–Born equilibrium on the spectral grid.
#[derive(Debug, Clone)]
pub struct ContinuumSolution {
    grid: SpectralGrid,
    values: Vec<f64>,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub max_gradient: f64,
}

impl ContinuumSolution {
    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// Grid values, component-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolants(&self) -> Vec<TrigInterpolant> {
        let pts = self.grid.points();
        (0..self.grid.dim())
            .map(|i| TrigInterpolant::new(&self.values[i * pts..(i + 1) * pts], self.grid.n(), self.grid.dim()))
            .collect()
    }

    /// Microscopic field `ũ^c(ξ) = (ζ * u^c)(ξ)` with `u^c(x) = ε⁻¹ U^c(εx)`.
    pub fn quasi_interpolated(&self, lattice: &LatticeSpec) -> Result<DisplacementField> {
        quasi_interpolate_grid(&self.grid, &self.values, lattice, lattice.cells() as f64)
    }

    /// Microscopic samples `u^c(ξ) = ε⁻¹ U^c(εξ)`.
    pub fn sampled(&self, lattice: &LatticeSpec) -> Result<DisplacementField> {
        let n = lattice.cells();
        let vals = self.grid.resample(&self.values, n, |_| 1.0);
        to_site_major(lattice, &vals, n as f64)
    }
}

/// `ζ * w` at the lattice sites for `w(x) = scale · W(εx)` given by grid
/// values of `W`.
pub(crate) fn quasi_interpolate_grid(grid: &SpectralGrid, values: &[f64], lattice: &LatticeSpec, scale: f64) -> Result<DisplacementField> {
    let n = lattice.cells();
    let eps = 1.0 / n as f64;
    let vals = grid.resample(values, n, |m| {
        m.iter()
            .map(|&k| {
                let h = PI * k as f64 * eps;
                if h == 0.0 {
                    1.0
                } else {
                    (h.sin() / h).powi(2)
                }
            })
            .product()
    });
    to_site_major(lattice, &vals, scale)
}

pub(crate) fn to_site_major(lattice: &LatticeSpec, comp_major: &[f64], scale: f64) -> Result<DisplacementField> {
    let d = lattice.dim();
    let pts = lattice.num_sites();
    let mut out = vec![0.0; pts * d];
    for i in 0..d {
        for s in 0..pts {
            out[s * d + i] = comp_major[i * pts + s] * scale;
        }
    }
    DisplacementField::from_values(lattice, out)
}

/// Newton iteration with line search for `-div S^c(∇U) = F` on the unit torus.
pub fn solve_cb_static(model: &CbModel, force: &MacroForce, grid: &SpectralGrid, opts: &StaticOptions) -> Result<ContinuumSolution> {
    let d = grid.dim();
    if model.dim() != d || force.dim() != d {
        return Err(Error::Config("model, force and grid dimensions differ".into()));
    }
    let cb = CbGrid { model, grid };
    let f = grid.project(&grid.sample(&force.field()));
    let zero = DMatrix::zeros(d, d);
    let pre = SpectralPreconditioner::new(grid, &model.moduli(&zero)?);
    let w = grid.weight();
    let objective = |u: &[f64]| -> Result<f64> {
        let e = cb.energy(&grid.gradient(u))?;
        Ok(e - w * dot(&f, u))
    };
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let s = cb.stress(&grid.gradient(u))?;
        let div = grid.divergence(&s);
        Ok(grid.project(&div.iter().zip(&f).map(|(a, b)| -a - b).collect::<Vec<_>>()))
    };

    let mut u = vec![0.0; d * grid.points()];
    let mut history = Vec::new();
    let mut r = residual(&u)?;
    let mut res = grid.l2_norm(&r);
    history.push(res);
    let mut iter = 0;
    // one extra step past the tolerance drives the residual to roundoff
    let mut polishing = false;
    loop {
        if res <= opts.tol_r {
            if polishing {
                break;
            }
            polishing = true;
        }
        if iter >= opts.max_newton {
            if polishing {
                break;
            }
            return Err(Error::Divergence { iterations: iter, history });
        }
        iter += 1;
        let moduli = cb.moduli(&grid.gradient(&u))?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let forcing = (0.1 * res).min(1e-2) * res;
        let cg = pcg(
            |v| grid.project(&cb.linearized(&moduli, v)),
            |v| pre.apply(v),
            &rhs,
            forcing.max(0.01 * opts.tol_r) / w.sqrt(),
            opts.max_cg,
        );
        if cg.negative_curvature && cg.iterations > 0 {
            return Err(Error::Instability("Cauchy–Born Hessian lost positivity".into()));
        }
        let step = cg.x;
        let j0 = objective(&u)?;
        let slope = w * dot(&r, &step);
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let (Ok(j), Ok(rt)) = (objective(&trial), residual(&trial)) {
                let rn = grid.l2_norm(&rt);
                if j <= j0 + 1e-4 * t * slope || (t == 1.0 && rn < res) {
                    break Some((trial, rt, rn));
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        let Some((trial, rt, rn)) = accepted.filter(|a| !polishing || a.2 < res) else {
            if polishing {
                break;
            }
            return Err(Error::Divergence { iterations: iter, history });
        };
        u = trial;
        r = rt;
        res = rn;
        history.push(res);
    }
    // certify from scratch
    let res = grid.l2_norm(&residual(&u)?);
    let max_gradient = cb.max_gradient(&grid.gradient(&u));
    if max_gradient >= model.potential().kappa() {
        return Err(Error::Instability(format!(
            "continuum gradient {max_gradient} reaches kappa = {}",
            model.potential().kappa()
        )));
    }
    Ok(ContinuumSolution {
        grid: grid.clone(),
        values: u,
        residual: res,
        residual_history: history,
        max_gradient,
    })
}

/// Inverse of the reference Hessian, applied in Fourier space.
struct SymbolPreconditioner {
    lattice: LatticeSpec,
    inverses: Vec<Option<DMatrix<Complex64>>>,
}

impl SymbolPreconditioner {
    fn new(p: &Potential, lattice: &LatticeSpec) -> Result<Option<Self>> {
        let d = lattice.dim();
        let n = lattice.cells();
        let mut inverses = Vec::with_capacity(lattice.num_sites());
        for idx in 0..lattice.num_sites() {
            let g = grid_coords(idx, n, d);
            if (0..d).all(|a| g[a] == 0) {
                inverses.push(None);
                continue;
            }
            let k: Vec<f64> = (0..d).map(|a| 2.0 * PI * g[a] as f64 / n as f64).collect();
            let h = dynamical_symbol(p, &k)?.conjugate();
            let min_ev = if d == 1 {
                h[(0, 0)].re
            } else {
                nalgebra::SymmetricEigen::new(h.clone()).eigenvalues.min()
            };
            if !(min_ev > 0.0) {
                return Ok(None);
            }
            inverses.push(h.try_inverse());
        }
        Ok(Some(Self {
            lattice: lattice.clone(),
            inverses,
        }))
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let d = self.lattice.dim();
        let n = self.lattice.cells();
        let pts = self.lattice.num_sites();
        let mut spec: Vec<Vec<Complex64>> = (0..d)
            .map(|i| {
                let mut c: Vec<Complex64> = (0..pts).map(|s| Complex64::new(r[s * d + i], 0.0)).collect();
                fftn(&mut c, n, d, false);
                c
            })
            .collect();
        let mut out_spec = vec![vec![Complex64::new(0.0, 0.0); pts]; d];
        for idx in 0..pts {
            if let Some(inv) = &self.inverses[idx] {
                for i in 0..d {
                    out_spec[i][idx] = (0..d).map(|j| inv[(i, j)] * spec[j][idx]).sum();
                }
            }
        }
        let mut out = vec![0.0; pts * d];
        for (i, c) in out_spec.iter_mut().enumerate() {
            fftn(c, n, d, true);
            for s in 0..pts {
                out[s * d + i] = c[s].re;
            }
        }
        spec.clear();
        out
    }
}

fn remove_mean(v: &mut [f64], d: usize) {
    let pts = v.len() / d;
    for i in 0..d {
        let comp: Vec<f64> = (0..pts).map(|s| v[s * d + i]).collect();
        let m = crate::potentials::pairwise_sum(&comp) / pts as f64;
        for s in 0..pts {
            v[s * d + i] -= m;
        }
    }
}

/// Atomistic equilibrium with its certification data.
#[derive(Debug, Clone)]
pub struct AtomisticSolution {
    pub u: DisplacementField,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// `E^a(u) - (f^a, u)` after every accepted step, starting at `u_init`.
    pub objective_history: Vec<f64>,
    /// Smallest `⟨δ²E^a(u) v, v⟩ / ‖v‖²` over the stability probes.
    pub min_probe_quotient: f64,
}

/// Newton–Krylov solve of `δE^a(u) = f^a` in the zero-mean gauge.
pub fn solve_atomistic_static(
    p: &Potential,
    f: &DisplacementField,
    u_init: &DisplacementField,
    opts: &StaticOptions,
) -> Result<AtomisticSolution> {
    let lattice = f.lattice().clone();
    let d = lattice.dim();
    let total: Vec<f64> = f.mean().iter().map(|m| m * lattice.num_sites() as f64).collect();
    let scale: f64 = f.values().iter().map(|v| v.abs()).sum();
    if total.iter().any(|t| t.abs() > 1e-10 * scale + 1e-14) {
        return Err(Error::Config(format!("atomistic forces have non-zero sum {total:?}")));
    }
    let mut fv = f.values().to_vec();
    remove_mean(&mut fv, d);
    let pre = SymbolPreconditioner::new(p, &lattice)?;

    let objective = |u: &DisplacementField| -> Result<f64> { Ok(p.total_energy(u)? - dot(&fv, u.values())) };
    let gradient = |u: &DisplacementField| -> Result<Vec<f64>> {
        let force = p.forces(u)?;
        let mut g: Vec<f64> = force.values().iter().zip(&fv).map(|(a, b)| -a - b).collect();
        remove_mean(&mut g, d);
        Ok(g)
    };

    let mut u = u_init.clone();
    u.remove_mean();
    let mut obj = objective(&u)?;
    let mut g = gradient(&u)?;
    let mut res = norm(&g);
    let mut history = vec![res];
    let mut objectives = vec![obj];
    let mut iter = 0;
    // one extra step past the tolerance drives the residual to roundoff
    let mut polishing = false;
    loop {
        if res <= opts.tol_a {
            if polishing {
                break;
            }
            polishing = true;
        }
        if iter >= opts.max_newton {
            if polishing {
                break;
            }
            return Err(Error::Divergence { iterations: iter, history });
        }
        iter += 1;
        let h = p.hessian(&u)?;
        let apply = |v: &[f64]| -> Vec<f64> {
            let vf = DisplacementField::from_values(&lattice, v.to_vec()).expect("field size");
            let mut out = h.apply(&vf).into_values();
            remove_mean(&mut out, d);
            out
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            match &pre {
                Some(pc) => pc.apply(r),
                None => {
                    let mut v = r.to_vec();
                    remove_mean(&mut v, d);
                    v
                }
            }
        };
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let forcing = (0.1 * res).min(1e-2) * res;
        let cg = pcg(apply, precond, &rhs, forcing.max(0.01 * opts.tol_a), opts.max_cg);
        if cg.negative_curvature && cg.iterations > 0 {
            return Err(Error::Instability("atomistic Hessian lost positivity during Newton".into()));
        }
        let mut step = cg.x;
        remove_mean(&mut step, d);
        let slope = dot(&g, &step);
        let mut t = 1.0;
        let accepted = loop {
            let mut trial = u.clone();
            for (a, b) in trial.values_mut().iter_mut().zip(&step) {
                *a += t * b;
            }
            if let (Ok(j), Ok(gt)) = (objective(&trial), gradient(&trial)) {
                let rn = norm(&gt);
                if j <= obj + 1e-4 * t * slope || (t == 1.0 && rn < res) {
                    break Some((trial, j, gt, rn));
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        let Some((trial, j, gt, rn)) = accepted.filter(|a| !polishing || a.3 < res) else {
            if polishing {
                break;
            }
            return Err(Error::Divergence { iterations: iter, history });
        };
        u = trial;
        obj = j;
        g = gt;
        res = rn;
        history.push(res);
        objectives.push(obj);
    }
    u.remove_mean();
    let residual = norm(&gradient(&u)?);
    let min_probe_quotient = probe_stability(p, &u, opts)?;
    if !(min_probe_quotient > 0.0) {
        return Err(Error::Instability(format!(
            "a-posteriori probe found Rayleigh quotient {min_probe_quotient}"
        )));
    }
    Ok(AtomisticSolution {
        u,
        residual,
        residual_history: history,
        objective_history: objectives,
        min_probe_quotient,
    })
}

/// Smallest Rayleigh quotient of `δ²E^a(u)` over random zero-mean probes and
/// the longest-wave cosine modes.
fn probe_stability(p: &Potential, u: &DisplacementField, opts: &StaticOptions) -> Result<f64> {
    let lattice = u.lattice();
    let d = lattice.dim();
    let n = lattice.cells() as f64;
    let h = p.hessian(u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probes = Vec::new();
    for _ in 0..opts.probes {
        let vals: Vec<f64> = (0..lattice.num_sites() * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        probes.push(DisplacementField::from_values(lattice, vals)?);
    }
    for i in 0..d {
        for a in 0..d {
            probes.push(DisplacementField::from_fn(lattice, |x| {
                let mut v = vec![0.0; d];
                v[i] = (2.0 * PI * x[a] / n).cos();
                v
            }));
        }
    }
    let mut min_q = f64::INFINITY;
    for mut v in probes {
        v.remove_mean();
        let nv = v.dot(&v);
        if nv > 0.0 {
            min_q = min_q.min(h.quadratic(&v) / nv);
        }
    }
    Ok(min_q)
}

/// `ε^{d/2} ‖∇u^c - ∇I u^a‖_{L²}` with `I` the smooth nodal interpolant,
/// integrated by tensor Gauss rules on every lattice cell.
pub fn static_error(continuum: &ContinuumSolution, ua: &DisplacementField, eps: f64) -> Result<f64> {
    check_scale(eps, ua.lattice())?;
    Ok(interpolation_mismatch(&continuum.interpolants(), ua, None, eps)?.0)
}

/// `(ε^{d/2} ‖∇u^c - ∇I u^a‖, ε^{d/2} ‖v^c - I v^a‖)` where `u^c(x) = ε⁻¹U(εx)`
/// and `v^c(x) = V(εx)` for macroscopic `U`, `V` given by their interpolants.
pub(crate) fn interpolation_mismatch(
    macro_u: &[TrigInterpolant],
    ua: &DisplacementField,
    velocity: Option<(&[TrigInterpolant], &DisplacementField)>,
    eps: f64,
) -> Result<(f64, f64)> {
    let lattice = ua.lattice();
    let d = lattice.dim();
    let w = smooth_nodal_interp(ua)?;
    let wv = velocity.map(|(_, va)| smooth_nodal_interp(va)).transpose()?;
    let rule = GaussLegendre::new(4);
    let q = rule.len();
    let per_cell = q.pow(d as u32);
    let cells: Vec<(f64, f64)> = (0..lattice.num_sites())
        .into_par_iter()
        .map(|cell| {
            let c = lattice.coords(cell);
            let (mut acc, mut acc_v) = (0.0, 0.0);
            for k in 0..per_cell {
                let mut x = vec![0.0; d];
                let mut weight = 1.0;
                let mut rem = k;
                for a in 0..d {
                    let j = rem % q;
                    rem /= q;
                    x[a] = c[a] as f64 + 0.5 * (rule.nodes()[j] + 1.0);
                    weight *= 0.5 * rule.weights()[j];
                }
                let xm: Vec<f64> = x.iter().map(|v| v * eps).collect();
                let gi = quasi_interp_grad(&w, &x);
                for (i, interp) in macro_u.iter().enumerate() {
                    let (_, gc) = interp.value_and_gradient(&xm);
                    for a in 0..d {
                        acc += weight * (gc[a] - gi[i * d + a]).powi(2);
                    }
                }
                if let (Some((vi, _)), Some(wv)) = (velocity, &wv) {
                    let iv = quasi_interp(wv, &x);
                    for (i, interp) in vi.iter().enumerate() {
                        acc_v += weight * (interp.value_and_gradient(&xm).0 - iv[i]).powi(2);
                    }
                }
            }
            (acc, acc_v)
        })
        .collect();
    let g: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let v: Vec<f64> = cells.iter().map(|c| c.1).collect();
    let scale = eps.powi(d as i32);
    Ok((
        (scale * crate::potentials::pairwise_sum(&g)).sqrt(),
        (scale * crate::potentials::pairwise_sum(&v)).sqrt(),
    ))
}

/// One member of a static sweep.
#[derive(Debug, Clone, Serialize)]
pub struct StaticSolution {
    pub eps: f64,
    pub cells: usize,
    pub cb_residual: f64,
    pub atomistic_residual: f64,
    pub newton_steps: usize,
    pub min_probe_quotient: f64,
    pub error: f64,
}

/// Result of [`static_converge_sweep`].
#[derive(Debug, Clone, Serialize)]
pub struct StaticSweep {
    pub runs: Vec<StaticSolution>,
    pub rate: RateReport,
}

impl StaticSweep {
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str(&format!("# {h}\n"));
        }
        s.push_str(&format!("# slope {:.6}\n", self.rate.slope));
        s.push_str("eps,cells,error,cb_residual,atomistic_residual,newton_steps,included\n");
        for (r, inc) in self.runs.iter().zip(&self.rate.included) {
            s.push_str(&format!(
                "{:.17e},{},{:.17e},{:.6e},{:.6e},{},{}\n",
                r.eps,
                r.cells,
                r.error,
                r.cb_residual,
                r.atomistic_residual,
                r.newton_steps,
                u8::from(*inc)
            ));
        }
        s
    }
}

/// Runs one atomistic solve for `cells` and measures its static error.
pub fn static_run(p: &Potential, force: &MacroForce, continuum: &ContinuumSolution, cells: usize, opts: &StaticOptions) -> Result<StaticSolution> {
    let lattice = LatticeSpec::new(p.dim(), p.orientation().clone(), cells)?;
    let eps = 1.0 / cells as f64;
    let forces = make_forces(force, eps, &lattice)?;
    let init = continuum.quasi_interpolated(&lattice)?;
    let sol = solve_atomistic_static(p, &forces.atomistic, &init, opts)?;
    let error = static_error(continuum, &sol.u, eps)?;
    Ok(StaticSolution {
        eps,
        cells,
        cb_residual: continuum.residual,
        atomistic_residual: sol.residual,
        newton_steps: sol.residual_history.len() - 1,
        min_probe_quotient: sol.min_probe_quotient,
        error,
    })
}

/// Solves the Cauchy–Born problem once and the atomistic problem for every
/// supercell size, then fits the error rate. Errors within ten times the
/// certified solver residual are excluded from the fit.
pub fn static_converge_sweep(p: &Potential, force: &MacroForce, cells: &[usize], opts: &StaticOptions) -> Result<StaticSweep> {
    if cells.len() < 3 {
        return Err(Error::RateFit(format!("need at least 3 eps values, have {}", cells.len())));
    }
    let model = CbModel::new(p.clone());
    let grid = SpectralGrid::new(opts.grid, p.dim())?;
    let continuum = solve_cb_static(&model, force, &grid, opts)?;
    let runs: Vec<StaticSolution> = cells
        .par_iter()
        .map(|&n| static_run(p, force, &continuum, n, opts))
        .collect::<Result<_>>()?;
    let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    let errors: Vec<f64> = runs.iter().map(|r| r.error).collect();
    let floor = runs
        .iter()
        .map(|r| r.cb_residual.max(r.atomistic_residual))
        .fold(0.0, f64::max);
    let rate = fit_rate(&eps, &errors, Some(10.0 * floor))?;
    Ok(StaticSweep { runs, rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierMode;
    use crate::potentials::RadialFunction;

    fn lj_chain() -> Potential {
        Potential::pair(RadialFunction::lennard_jones(), DMatrix::identity(1, 1), 2.0)
            .unwrap()
            .with_kappa(0.4)
            .unwrap()
    }

    fn smooth_force(delta: f64) -> MacroForce {
        let shape = FourierField::new(
            1,
            vec![
                FourierMode { wave: vec![1], cos: vec![0.0], sin: vec![1.0] },
                FourierMode { wave: vec![2], cos: vec![0.5], sin: vec![0.0] },
            ],
        )
        .unwrap();
        MacroForce::new(shape, delta).unwrap()
    }

    #[test]
    fn constant_force_transfers_exactly() {
        let lat = LatticeSpec::cubic(2, 8).unwrap();
        let f = MacroForce {
            shape: FourierField::new(2, vec![FourierMode { wave: vec![0, 0], cos: vec![1.5, -0.5], sin: vec![] }]).unwrap(),
            delta: 1.0,
        };
        let forces = make_forces(&f, 0.125, &lat).unwrap();
        for s in 0..lat.num_sites() {
            assert!((forces.atomistic.get(s)[0] - 0.1875).abs() < 1e-15);
            assert!((forces.atomistic.get(s)[1] + 0.0625).abs() < 1e-15);
        }
        assert!(MacroForce::new(f.shape.clone(), 1.0).is_err());
        assert!(make_forces(&f, 0.1, &lat).is_err());
    }

    #[test]
    fn harmonic_chain_matches_fourier_division() {
        let p = Potential::harmonic_chain(2.0, -0.25);
        let model = CbModel::new(p);
        let grid = SpectralGrid::new(32, 1).unwrap();
        let force = smooth_force(0.3);
        let sol = solve_cb_static(&model, &force, &grid, &StaticOptions::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        // a1 + 4 a2 = 1
        let exact = force.field().map_modes(|m| 1.0 / (2.0 * PI * m[0] as f64).powi(2));
        for (j, v) in sol.values().iter().enumerate() {
            assert!((v - exact.value(&[j as f64 / 32.0])[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_force_gives_zero() {
        let p = lj_chain();
        let model = CbModel::new(p.clone());
        let grid = SpectralGrid::new(16, 1).unwrap();
        let force = smooth_force(0.0);
        let sol = solve_cb_static(&model, &force, &grid, &StaticOptions::default()).unwrap();
        assert!(sol.values().iter().all(|v| *v == 0.0));
        let lat = LatticeSpec::cubic(1, 16).unwrap();
        let zero = DisplacementField::zeros(&lat);
        let a = solve_atomistic_static(&p, &zero, &zero, &StaticOptions::default()).unwrap();
        assert!(a.u.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lj_newton_converges_quadratically() {
        let model = CbModel::new(lj_chain());
        let grid = SpectralGrid::new(64, 1).unwrap();
        let sol = solve_cb_static(&model, &smooth_force(0.5), &grid, &StaticOptions::default()).unwrap();
        let h = &sol.residual_history;
        assert!(h.len() >= 3, "{h:?}");
        let late = h[h.len() - 2] / h[h.len() - 3];
        assert!(late <= 0.1, "{h:?}");
    }

    #[test]
    fn harmonic_atomistic_matches_direct_solve() {
        let p = Potential::harmonic_chain(2.0, -0.25);
        let n = 24;
        let lat = LatticeSpec::cubic(1, n).unwrap();
        let force = make_forces(&smooth_force(0.2), 1.0 / n as f64, &lat).unwrap();
        let zero = DisplacementField::zeros(&lat);
        let sol = solve_atomistic_static(&p, &force.atomistic, &zero, &StaticOptions::default()).unwrap();
        // dense gauge-fixed Hessian with a rank-one mean penalty
        let h = p.hessian(&zero).unwrap();
        let mut m = DMatrix::<f64>::from_element(n, n, 1.0);
        for j in 0..n {
            let mut e = DisplacementField::zeros(&lat);
            e.get_mut(j)[0] = 1.0;
            let col = h.apply(&e);
            for i in 0..n {
                m[(i, j)] += col.get(i)[0];
            }
        }
        let b = nalgebra::DVector::from_column_slice(force.atomistic.values());
        let x = m.lu().solve(&b).unwrap();
        for i in 0..n {
            assert!((sol.u.get(i)[0] - x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn atomistic_residual_is_certified() {
        let p = lj_chain();
        let n = 32;
        let lat = LatticeSpec::cubic(1, n).unwrap();
        let force = smooth_force(0.05);
        let forces = make_forces(&force, 1.0 / n as f64, &lat).unwrap();
        let zero = DisplacementField::zeros(&lat);
        let opts = StaticOptions::default();
        let sol = solve_atomistic_static(&p, &forces.atomistic, &zero, &opts).unwrap();
        assert!(sol.residual <= opts.tol_a);
        assert!(sol.min_probe_quotient > 0.0);
        assert!(sol.u.mean()[0].abs() < 1e-15);
        for w in sol.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-14 * w[0].abs().max(1.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grad = p.forces(&sol.u).unwrap();
        for _ in 0..10 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs: f64 = grad.values().iter().zip(&v).map(|(g, v)| -g * v).sum();
            let rhs: f64 = forces.atomistic.values().iter().zip(&v).map(|(f, v)| f * v).sum();
            assert!((lhs - rhs).abs() <= opts.tol_a * (n as f64).sqrt());
        }
        let mut bad = forces.atomistic.clone();
        bad.get_mut(0)[0] += 1e-3;
        assert!(matches!(solve_atomistic_static(&p, &bad, &zero, &opts), Err(Error::Config(_))));
    }

    #[test]
    fn error_is_gauge_invariant() {
        let p = Potential::harmonic_chain(2.0, -0.25);
        let model = CbModel::new(p.clone());
        let grid = SpectralGrid::new(32, 1).unwrap();
        let sol = solve_cb_static(&model, &smooth_force(0.1), &grid, &StaticOptions::default()).unwrap();
        let lat = LatticeSpec::cubic(1, 16).unwrap();
        let u = sol.sampled(&lat).unwrap();
        let e0 = static_error(&sol, &u, 1.0 / 16.0).unwrap();
        let mut shifted = u.clone();
        shifted.values_mut().iter_mut().for_each(|v| *v += 3.0);
        let e1 = static_error(&sol, &shifted, 1.0 / 16.0).unwrap();
        assert!((e0 - e1).abs() < 1e-12);
    }
}
