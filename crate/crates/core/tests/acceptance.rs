//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use latcb::dynamics::{dynamic_error_sweep, instability_demo, DynamicsOptions, InitialData, ProbeProfile};
use latcb::fourier::FourierField;
use latcb::harness::{fit_rate, run, ExperimentConfig, RunOptions};
use latcb::interpolation::{chi_eval, grad_rho_chi, nodal_grad, quasi_interp, quasi_interp_at_sites};
use latcb::quadrature::{cut_by_integer_lines, integrate_polygon, GaussLegendre, Point2};
use latcb::stability::{instability_eigenprobe, stability_constant};
use latcb::statics::{static_converge_sweep, MacroForce, StaticOptions};
use latcb::stress::{stress_consistency_field, AtomisticStress, CbModel};
use latcb::{Direction, DisplacementField, LatticeSpec, Polynomial, Potential, RadialFunction};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn lj(d: usize, cutoff: f64) -> Potential {
    Potential::pair(RadialFunction::lennard_jones(), DMatrix::identity(d, d), cutoff).unwrap()
}

fn morse(d: usize) -> Potential {
    Potential::pair(
        RadialFunction::Morse { depth: 1.3, stiffness: 2.0, r0: 1.0 },
        DMatrix::identity(d, d),
        2.0,
    )
    .unwrap()
}

fn eam(d: usize, with_pair: bool) -> Potential {
    Potential::eam(
        with_pair.then(RadialFunction::lennard_jones),
        RadialFunction::Exponential { coeff: 1.0, decay: 3.0, r0: 1.0 },
        Polynomial::new(vec![0.0, -1.0, 0.3]),
        DMatrix::identity(d, d),
        1.5,
    )
    .unwrap()
}

fn all_potentials() -> Vec<(&'static str, Potential)> {
    vec![
        ("lj 1d", lj(1, 2.0)),
        ("lj 2d", lj(2, 2.0)),
        ("morse 2d", morse(2)),
        ("eam 1d", eam(1, true)),
        ("eam 2d", eam(2, true)),
        ("eam 2d embedding only", eam(2, false)),
        ("harmonic chain", Potential::harmonic_chain(2.0, -0.25)),
        ("unstable harmonic chain", Potential::harmonic_chain(-1.0, 0.5)),
    ]
}

fn random_direction(rng: &mut ChaCha8Rng, d: usize, max_norm: f64) -> Direction {
    loop {
        let c: Vec<i64> = (0..d).map(|_| rng.random_range(-3..=3)).collect();
        let n = c.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if n > 0.0 && n <= max_norm {
            return Direction::new(c).unwrap();
        }
    }
}

fn random_field(rng: &mut ChaCha8Rng, lattice: &LatticeSpec, amplitude: f64) -> DisplacementField {
    let d = lattice.dim();
    let values = (0..lattice.num_sites() * d).map(|_| rng.random_range(-amplitude..amplitude)).collect();
    DisplacementField::from_values(lattice, values).unwrap()
}

/// Every site of `Z^d` within `reach` of `x` in each coordinate.
fn window(x: &[f64], reach: i64, mut f: impl FnMut(&[i64])) {
    let d = x.len();
    let base: Vec<i64> = x.iter().map(|v| v.floor() as i64).collect();
    let w = 2 * reach + 1;
    for idx in 0..(w as usize).pow(d as u32) {
        let mut c = vec![0i64; d];
        let mut r = idx;
        for a in 0..d {
            c[a] = base[a] - reach + (r % w as usize) as i64;
            r /= w as usize;
        }
        f(&c);
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for d in [1usize, 2] {
        for _ in 0..100 {
            let rho = random_direction(&mut rng, d, 3.0);
            let r = rho.as_f64();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut s0 = 0.0;
            let mut s1 = vec![0.0; d];
            let mut g0 = 0.0;
            let mut g1 = vec![0.0; d];
            let mut g2 = vec![0.0; d * d];
            window(&x, 6, |xi| {
                let c = chi_eval(xi, &rho, &x);
                let g = grad_rho_chi(xi, &rho, &x);
                s0 += c;
                g0 += g;
                for a in 0..d {
                    let da = xi[a] as f64 - x[a];
                    s1[a] += c * da;
                    g1[a] += g * da;
                    for b in 0..d {
                        g2[a * d + b] += g * da * (xi[b] as f64 - x[b]);
                    }
                }
            });
            worst = worst.max((s0 - 1.0).abs()).max(g0.abs());
            for a in 0..d {
                worst = worst.max((s1[a] + 0.5 * r[a]).abs()).max((g1[a] - r[a]).abs());
                for b in 0..d {
                    worst = worst.max((g2[a * d + b] + r[a] * r[b]).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("max violation {worst:.3e} (tol 1e-10)"))
}

/// Kink-line families of `χ_{ξ,ρ}` beyond the coordinate grid.
fn chi_families(dirs: &[Direction]) -> Vec<Point2> {
    let mut fams: Vec<Point2> = vec![[1.0, 0.0], [0.0, 1.0]];
    for rho in dirs {
        let r = rho.components();
        if r.len() == 2 && r[0] != 0 && r[1] != 0 {
            let n = [r[1] as f64, -(r[0] as f64)];
            if !fams.iter().any(|f| (f[0] == n[0] && f[1] == n[1]) || (f[0] == -n[0] && f[1] == -n[1])) {
                fams.push(n);
            }
        }
    }
    fams
}

/// `∫ f` over the box `[lo, hi]` (integer corners), split into unit cells
/// and along the kink families, with a rule exact on every smooth piece.
fn integrate_box(lo: &[i64], hi: &[i64], fams: &[Point2], rule: &GaussLegendre, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    if lo.len() == 1 {
        return (lo[0]..hi[0])
            .map(|c| rule.integrate(c as f64, c as f64 + 1.0, |t| f(&[t])))
            .sum();
    }
    let mut total = 0.0;
    for i in lo[0]..hi[0] {
        for j in lo[1]..hi[1] {
            let (x0, y0) = (i as f64, j as f64);
            let cell = vec![[x0, y0], [x0 + 1.0, y0], [x0 + 1.0, y0 + 1.0], [x0, y0 + 1.0]];
            for piece in cut_by_integer_lines(cell, fams) {
                total += integrate_polygon(&piece, rule, &mut |p| f(&p));
            }
        }
    }
    total
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rule = GaussLegendre::new(5);
    let mut worst: f64 = 0.0;
    for d in [1usize, 2] {
        let lattice = LatticeSpec::cubic(d, 12).unwrap();
        let dirs: Vec<Direction> = {
            let mut v = Vec::new();
            window(&vec![0.0; d], 3, |c| {
                let n = c.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
                if n > 0.0 && n <= 3.0 {
                    v.push(Direction::new(c.to_vec()).unwrap());
                }
            });
            v
        };
        for _ in 0..20 {
            let v = random_field(&mut rng, &lattice, 1.0);
            let xi = vec![5i64; d];
            let xi_f: Vec<f64> = xi.iter().map(|&c| c as f64).collect();
            for rho in &dirs {
                let r = rho.as_f64();
                let fams = chi_families(std::slice::from_ref(rho));
                let lo: Vec<i64> = (0..d).map(|a| xi[a] - 1 + rho.components()[a].min(0)).collect();
                let hi: Vec<i64> = (0..d).map(|a| xi[a] + 1 + rho.components()[a].max(0)).collect();
                let end: Vec<f64> = (0..d).map(|a| xi_f[a] + r[a]).collect();
                let lhs: Vec<f64> = quasi_interp(&v, &end)
                    .iter()
                    .zip(quasi_interp(&v, &xi_f))
                    .map(|(a, b)| a - b)
                    .collect();
                for i in 0..d {
                    let rhs = integrate_box(&lo, &hi, &fams, &rule, |x| {
                        let g = nodal_grad(&v, x);
                        let grad_rho: f64 = (0..d).map(|a| g[i * d + a] * r[a]).sum();
                        chi_eval(&xi, rho, x) * grad_rho
                    });
                    worst = worst.max((lhs[i] - rhs).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("max residual {worst:.3e} over 20 fields per dimension, |rho| <= 3 (tol 1e-10)"))
}

fn weak_form_mismatch(p: &Potential, cells: usize, rng: &mut ChaCha8Rng) -> f64 {
    let d = p.dim();
    let lattice = LatticeSpec::cubic(d, cells).unwrap();
    let u = random_field(rng, &lattice, 0.03);
    let w = random_field(rng, &lattice, 1.0);
    let sa = AtomisticStress::new(p, &u).unwrap();
    let vt = quasi_interp_at_sites(&w);
    let grads = p.site_gradients(&u).unwrap();
    let dirs = p.stencil().directions();
    let n = dirs.len();
    let mut rhs = 0.0;
    let mut scale = 0.0;
    for site in 0..lattice.num_sites() {
        let c = lattice.coords(site);
        for (k, rho) in dirs.iter().enumerate() {
            let end: Vec<i64> = (0..d).map(|a| c[a] + rho.components()[a]).collect();
            for i in 0..d {
                let term = grads[(site * n + k) * d + i] * (vt.at(&end)[i] - vt.get(site)[i]);
                rhs += term;
                scale += term.abs();
            }
        }
    }
    let rule = GaussLegendre::new(5);
    let fams = chi_families(dirs);
    let lhs = integrate_box(&vec![0; d], &vec![cells as i64; d], &fams, &rule, |x| {
        let s = sa.at(x);
        let g = nodal_grad(&w, x);
        (0..d).flat_map(|i| (0..d).map(move |a| (i, a))).map(|(i, a)| s[(i, a)] * g[i * d + a]).sum()
    });
    (lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = [(lj(1, 2.0), 12), (eam(1, true), 12), (lj(2, 2.0), 6), (eam(2, true), 6)];
    let mut worst: f64 = 0.0;
    for (p, cells) in &cases {
        for _ in 0..5 {
            worst = worst.max(weak_form_mismatch(p, *cells, &mut rng));
        }
    }
    outcome(worst <= 1e-8, format!("max relative mismatch {worst:.3e} over 20 pairs (tol 1e-8)"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_f: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for (_, p) in all_potentials() {
        let d = p.dim();
        let cells = if d == 1 { 10 } else { 6 };
        let lattice = LatticeSpec::cubic(d, cells).unwrap();
        let u = random_field(&mut rng, &lattice, 0.02);
        let v = random_field(&mut rng, &lattice, 1.0);
        let h = 1e-5;
        let shifted = |t: f64| {
            let mut w = u.clone();
            w.axpy(t, &v);
            w
        };
        // directional derivative of the energy against -F·v
        let fd = (p.total_energy(&shifted(h)).unwrap() - p.total_energy(&shifted(-h)).unwrap()) / (2.0 * h);
        let f = p.forces(&u).unwrap();
        let an = -f.dot(&v);
        let fscale: f64 = f.values().iter().zip(v.values()).map(|(a, b)| (a * b).abs()).sum();
        worst_f = worst_f.max((fd - an).abs() / fscale.max(1e-12));
        let hv = p.hessian_apply(&u, &v).unwrap();
        let fp = p.forces(&shifted(h)).unwrap();
        let fm = p.forces(&shifted(-h)).unwrap();
        let mut num = 0.0;
        let mut den: f64 = 0.0;
        for s in 0..hv.values().len() {
            let fdv = -(fp.values()[s] - fm.values()[s]) / (2.0 * h);
            num += (fdv - hv.values()[s]).powi(2);
            den += hv.values()[s].powi(2);
        }
        worst_h = worst_h.max(num.sqrt() / den.sqrt().max(1e-12));
    }
    outcome(
        worst_f <= 1e-6 && worst_h <= 1e-6,
        format!("force rel {worst_f:.3e}, hessian rel {worst_h:.3e} on {} potentials (tol 1e-6)", all_potentials().len()),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for (_, p) in all_potentials() {
        let d = p.dim();
        let m = CbModel::new(p.clone());
        let lattice = LatticeSpec::cubic(d, 8).unwrap();
        let kappa = p.kappa().min(1.0);
        for _ in 0..20 {
            let mut f = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let scale = rng.random_range(0.0..kappa) / f.norm();
            f *= scale;
            let g = m.homogeneous_stencil(&f);
            let site = p.site_gradient(&g).unwrap();
            let grads: Vec<f64> = (0..lattice.num_sites()).flat_map(|_| site.iter().copied()).collect();
            let sa = AtomisticStress::from_site_gradients(&p, &lattice, grads).unwrap();
            let sc = m.stress(&f).unwrap();
            for _ in 0..5 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..8.0)).collect();
                worst = worst.max((sa.at(&x) - &sc).norm() / sc.norm().max(1.0));
            }
        }
    }
    outcome(worst <= 1e-12, format!("max |S^a - S^c| {worst:.3e} (tol 1e-12)"))
}

fn criterion_6() -> Outcome {
    let stable = stability_constant(&Potential::harmonic_chain(2.0, -0.25), 256).unwrap();
    let unstable_p = Potential::harmonic_chain(-1.0, 0.5);
    let unstable = stability_constant(&unstable_p, 256).unwrap();
    let probe = instability_eigenprobe(&unstable_p, 64).unwrap();
    let ok = (stable.gamma - 1.0).abs() <= 1e-6
        && (unstable.gamma + 1.0).abs() <= 1e-6
        && (probe.rayleigh_quotient + 1.0).abs() <= 1e-10;
    outcome(
        ok,
        format!(
            "gamma {:.9}, infimum {:.9}, probe quotient {:.12}",
            stable.gamma, unstable.gamma, probe.rayleigh_quotient
        ),
    )
}

fn criterion_7() -> Outcome {
    let p = lj(1, 2.0).with_kappa(0.4).unwrap();
    let m = CbModel::new(p.clone());
    let field = FourierField::sine(vec![1], vec![1.0], 0.05);
    let cells = [8usize, 16, 32, 64, 128];
    let rows: Vec<_> = cells
        .iter()
        .map(|&n| stress_consistency_field(&p, &m, &field, n, 4, 1).unwrap())
        .collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let s = fit_rate(&eps, &rows.iter().map(|r| r.stress).collect::<Vec<_>>(), None).unwrap();
    let dv = fit_rate(&eps, &rows.iter().map(|r| r.divergence).collect::<Vec<_>>(), None).unwrap();
    let inside = |x: f64| (1.8..=2.2).contains(&x);
    outcome(
        inside(s.slope) && inside(dv.slope),
        format!("stress slope {:.4}, divergence slope {:.4} (band [1.8, 2.2])", s.slope, dv.slope),
    )
}

fn criterion_8() -> Outcome {
    let p = lj(1, 2.0);
    let shape = FourierField::sine(vec![1], vec![1.0], 1.0);
    let cells = [8usize, 16, 32, 64, 128];
    let opts = StaticOptions::default();
    let full = static_converge_sweep(&p, &MacroForce::new(shape.clone(), 0.01).unwrap(), &cells, &opts).unwrap();
    let half = static_converge_sweep(&p, &MacroForce::new(shape, 0.005).unwrap(), &cells, &opts).unwrap();
    let ratios: Vec<f64> = half.runs.iter().zip(&full.runs).map(|(h, f)| h.error / f.error).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        (1.8..=2.2).contains(&full.rate.slope) && lo >= 0.4 && hi <= 0.6,
        format!("slope {:.4} (band [1.8, 2.2]), delta-halving ratios in [{lo:.5}, {hi:.5}] (band [0.4, 0.6])", full.rate.slope),
    )
}

fn criterion_9() -> Outcome {
    let p = lj(1, 2.0);
    let u0 = FourierField::sine(vec![1], vec![1.0], 0.05 / (2.0 * std::f64::consts::PI));
    let data = InitialData::new(u0, FourierField::zero(1)).unwrap();
    match dynamic_error_sweep(&p, &data, &[16, 32, 64, 128], 0.5, &DynamicsOptions::default()) {
        Ok(s) => outcome(
            (1.8..=2.2).contains(&s.rate.slope) && s.half_dt_change < 0.1,
            format!("slope {:.4} (band [1.8, 2.2]), half-dt change {:.3e} (< 0.1)", s.rate.slope, s.half_dt_change),
        ),
        Err(e) => outcome(false, format!("sweep aborted: {e}")),
    }
}

fn criterion_10() -> Outcome {
    let unstable = instability_demo(-1.0, 0.5, 64, ProbeProfile::Alternating, None).unwrap();
    let stable = instability_demo(2.0, -0.25, 64, ProbeProfile::Alternating, None).unwrap();
    outcome(
        unstable.min_growth_ratio >= 1.0 && stable.max_velocity_ratio <= 2.0,
        format!(
            "unstable min |v|/(eps^2 e^t / 2) = {:.4} over [{:.2}, {:.2}], stable max |v|/eps^2 = {:.4}",
            unstable.min_growth_ratio, unstable.window.0, unstable.window.1, stable.max_velocity_ratio
        ),
    )
}

fn criterion_11() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut checked = 0;
    for file in [
        "stability_unstable_chain.toml",
        "dispersion_lj_square.toml",
        "stress_lj_chain.toml",
        "static_lj_chain.toml",
        "dynamic_lj_chain.toml",
        "instability_unstable_chain.toml",
    ] {
        let cfg = ExperimentConfig::load(&dir.join(file)).unwrap();
        let a = run(&cfg, &RunOptions::default()).unwrap();
        let b = run(&cfg, &RunOptions { workers: Some(1), ..RunOptions::default() }).unwrap();
        if a.csv != b.csv {
            return outcome(false, format!("{file}: CSV differs between runs"));
        }
        checked += 1;
    }
    outcome(true, format!("{checked} configs byte-identical across repeated runs and worker counts"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("kernel identities", criterion_1, Duration::from_secs(10)),
        ("localization formula", criterion_2, Duration::from_secs(30)),
        ("weak-form stress identity", criterion_3, Duration::from_secs(60)),
        ("gradient and Hessian consistency", criterion_4, Duration::MAX),
        ("affine exactness", criterion_5, Duration::MAX),
        ("lattice stability", criterion_6, Duration::MAX),
        ("stress consistency rate", criterion_7, Duration::from_secs(300)),
        ("static convergence", criterion_8, Duration::from_secs(600)),
        ("dynamic convergence", criterion_9, Duration::from_secs(1800)),
        ("instability demo", criterion_10, Duration::from_secs(120)),
        ("determinism", criterion_11, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let passed = out.passed && in_time;
        if !passed {
            failed += 1;
        }
        let budget_note = if *budget == Duration::MAX {
            String::new()
        } else {
            format!(", budget {}s", budget.as_secs())
        };
        println!(
            "criterion {:>2} {:<34} {}  {} [{:.2}s{budget_note}]",
            i + 1,
            name,
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
