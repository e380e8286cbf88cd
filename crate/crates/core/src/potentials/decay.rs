//! Decay constants `M^(j)`, `Ms^(j,2)`, `Md^(j,2)`: partial sums over
//! `0 < |ρ| ≤ R_max` plus a rigorous lattice-sum tail bound for an assumed
//! power-law decay `m(ρ) ≲ |ρ|^{-α}`.

use std::collections::HashMap;

use serde::Serialize;

use super::{Potential, PotentialKind, RadialFunction};
use crate::error::{Error, Result};
use crate::lattice::StencilSet;

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    pub direction: Vec<i64>,
    pub norm: f64,
    /// `m(ρ, …, ρ)` for orders 1..=4.
    pub m: [f64; MAX_ORDER],
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayConstant {
    pub name: String,
    pub partial_sum: f64,
    /// Bound on the discarded tail `|ρ| > R_max`; infinite if the series diverges.
    pub tail_bound: f64,
    pub finite: bool,
}

impl DecayConstant {
    pub fn total_bound(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub kappa: f64,
    pub r_max: f64,
    pub exponent: Option<f64>,
    pub entries: Vec<DecayEntry>,
    pub constants: Vec<DecayConstant>,
    /// Set when any reported constant is infinite.
    pub divergent: bool,
}

impl DecayReport {
    pub fn constant(&self, name: &str) -> Option<&DecayConstant> {
        self.constants.iter().find(|c| c.name == name)
    }
}

/// Surface measure of the unit sphere in `R^d` (counting measure for d = 1).
fn sphere_measure(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    }
}

/// Bound on `Σ_{ρ ∈ Z^d, |ρ| > R} |ρ|^{-s}`; infinite when `s ≤ d`.
pub(crate) fn lattice_tail(s: f64, d: usize, r: f64) -> f64 {
    let h = (d as f64).sqrt() / 2.0;
    if s <= d as f64 {
        return f64::INFINITY;
    }
    let r = r.max(3.0 * h);
    sphere_measure(d) * 2f64.powi(d as i32 - 1) * (r - 2.0 * h).powf(d as f64 - s) / (s - d as f64)
}

/// Sup over `[lo, hi]` of a bound on `‖∇^k Φ‖`, `Φ(x) = f(|x|)`.
fn radial_tensor_bound(f: &RadialFunction, k: u32, d: usize, lo: f64, hi: f64) -> f64 {
    const SAMPLES: usize = 256;
    let mut best = 0.0f64;
    for i in 0..=SAMPLES {
        let r = lo + (hi - lo) * i as f64 / SAMPLES as f64;
        let a = |j| f.deriv(r, j).abs();
        let v = if d == 1 {
            a(k)
        } else {
            match k {
                1 => a(1),
                2 => a(2).max(a(1) / r),
                3 => a(3) + 3.0 * a(2) / r + 3.0 * a(1) / (r * r),
                _ => a(4) + 6.0 * a(3) / r + 15.0 * a(2) / (r * r) + 15.0 * a(1) / (r * r * r),
            }
        };
        best = best.max(v);
    }
    best
}

/// Running partial sum with power-law tail estimate.
struct Series {
    name: String,
    partial: f64,
    shell_max: f64,
    exponent: f64,
}

impl Series {
    fn new(name: impl Into<String>, exponent: f64) -> Self {
        Self {
            name: name.into(),
            partial: 0.0,
            shell_max: 0.0,
            exponent,
        }
    }

    fn add(&mut self, term: f64, norm: f64, r_max: f64) {
        self.partial += term;
        if norm > 0.5 * r_max {
            self.shell_max = self.shell_max.max(term * norm.powf(self.exponent));
        }
    }

    fn tail(&self, d: usize, r_max: f64) -> f64 {
        if self.shell_max == 0.0 && self.exponent.is_infinite() {
            return 0.0;
        }
        let t = lattice_tail(self.exponent, d, r_max);
        if t.is_infinite() {
            f64::INFINITY
        } else {
            self.shell_max * t
        }
    }

    fn finish(self, d: usize, r_max: f64) -> DecayConstant {
        let tail = self.tail(d, r_max);
        DecayConstant {
            name: self.name,
            partial_sum: self.partial,
            tail_bound: tail,
            finite: tail.is_finite(),
        }
    }
}

/// Weight `(|𝛒|^2, (Σ_i …)^{1/(2(j-1))})` for the diagonal multi-index `(ρ,…,ρ)`.
fn diagonal_weight(j: usize, norm: f64) -> f64 {
    ((j - 1) as f64 * 2.0 * norm).powf(1.0 / (2.0 * (j - 1) as f64))
}

/// Decay table and constants over `0 < |ρ| ≤ r_max` for admissibility
/// radius `kappa`. `exponent` is the assumed decay rate of `m(ρ)` (α for
/// pair, β for EAM) and is required for infinite-range variants.
pub fn decay_report(p: &Potential, kappa: f64, r_max: f64, exponent: Option<f64>) -> Result<DecayReport> {
    let d = p.dim();
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Config(format!("decay report needs finite kappa > 0, got {kappa}")));
    }
    if r_max < p.stencil().cutoff() {
        return Err(Error::Config(format!(
            "R_max = {r_max} is below the stencil cutoff {}",
            p.stencil().cutoff()
        )));
    }
    if let PotentialKind::HarmonicChain { a1, a2 } = p.kind() {
        return Ok(harmonic_report(*a1, *a2, kappa, r_max));
    }
    let alpha = exponent.ok_or_else(|| {
        Error::Config("tail exponent required for the decay report of an infinite-range potential".into())
    })?;
    if r_max.is_infinite() {
        return Err(Error::Config("R_max must be finite".into()));
    }
    let set = StencilSet::new(d, r_max)?;
    let a = p.orientation();
    let bond_len = |rho: &[f64]| -> f64 {
        (0..d)
            .map(|i| (0..d).map(|b| a[(i, b)] * rho[b]).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    };

    // per-direction radius interval
    let mut intervals = Vec::with_capacity(set.len());
    for rho in set.directions() {
        let norm = rho.norm();
        let len = bond_len(&rho.as_f64());
        let lo = len - kappa * norm;
        if lo <= 0.0 {
            return Err(Error::Config(format!(
                "kappa = {kappa} admits collapsed bonds along {:?}",
                rho.components()
            )));
        }
        intervals.push((norm, lo, len + kappa * norm));
    }

    let mut cache: HashMap<(u64, u64, u64), [f64; MAX_ORDER]> = HashMap::new();
    let mut tensor_sups = |f: &RadialFunction, lo: f64, hi: f64, tag: u64| -> [f64; MAX_ORDER] {
        *cache
            .entry((tag, lo.to_bits(), hi.to_bits()))
            .or_insert_with(|| {
                let mut out = [0.0; MAX_ORDER];
                for (k, o) in out.iter_mut().enumerate() {
                    *o = radial_tensor_bound(f, k as u32 + 1, d, lo, hi);
                }
                out
            })
    };

    let mut entries = Vec::with_capacity(set.len());
    let mut constants = Vec::new();
    match p.kind() {
        PotentialKind::Pair { phi } => {
            let mut m_series: Vec<Series> = (1..=MAX_ORDER).map(|j| Series::new(format!("M{j}"), alpha)).collect();
            let mut ms: Vec<Series> = (2..=MAX_ORDER)
                .map(|j| Series::new(format!("Ms{j}"), alpha - 2.0 - 1.0 / (2.0 * (j - 1) as f64)))
                .collect();
            let mut md: Vec<Series> = (2..=MAX_ORDER)
                .map(|j| Series::new(format!("Md{j}"), alpha - 2.0 - 1.0 / (2.0 * (j - 1) as f64)))
                .collect();
            for (rho, &(norm, lo, hi)) in set.directions().iter().zip(&intervals) {
                let sups = tensor_sups(phi, lo, hi, 0);
                let mut m = [0.0; MAX_ORDER];
                for j in 1..=MAX_ORDER {
                    m[j - 1] = norm.powi(j as i32) * 0.5 * sups[j - 1];
                    m_series[j - 1].add(m[j - 1], norm, r_max);
                    if j >= 2 {
                        let w = diagonal_weight(j, norm);
                        let total = j as f64 * norm;
                        ms[j - 2].add(m[j - 1] * total * total * w, norm, r_max);
                        md[j - 2].add(m[j - 1] * total.powi(3) / norm * w, norm, r_max);
                    }
                }
                entries.push(DecayEntry {
                    direction: rho.components().to_vec(),
                    norm,
                    m,
                });
            }
            constants.extend(m_series.into_iter().map(|s| s.finish(d, r_max)));
            constants.extend(ms.into_iter().map(|s| s.finish(d, r_max)));
            constants.extend(md.into_iter().map(|s| s.finish(d, r_max)));
        }
        PotentialKind::Eam {
            phi,
            density,
            embedding,
        } => {
            // range of the electron density over the admissible set
            let (mut s_lo, mut s_hi) = (0.0, 0.0);
            for &(_, lo, hi) in &intervals {
                let (mn, mx) = density.range(lo, hi);
                s_lo += mn;
                s_hi += mx;
            }
            let g_sup: Vec<f64> = (0..=MAX_ORDER as u32).map(|k| embedding.sup_abs(k, s_lo, s_hi)).collect();

            // P_k = Σ |ρ|^k sup‖∇^k Ψ‖ and the pair-part sums, with tails
            let mut psi_series: Vec<Series> = (1..=MAX_ORDER).map(|k| Series::new(format!("P{k}"), alpha)).collect();
            let mut pair_series: Vec<Series> = (1..=MAX_ORDER).map(|k| Series::new(format!("Q{k}"), alpha)).collect();
            let ws = alpha - 2.5;
            let mut a0 = Series::new("A0", alpha - 0.5);
            let mut a2 = Series::new("A2", ws);
            let mut a_inv = Series::new("Ainv", alpha + 0.5);
            let mut a3 = Series::new("A3", alpha - 3.5);
            let mut q2s = Series::new("Q2s", ws);
            for (rho, &(norm, lo, hi)) in set.directions().iter().zip(&intervals) {
                let psi = tensor_sups(density, lo, hi, 1);
                let pair = phi
                    .as_ref()
                    .map(|f| tensor_sups(f, lo, hi, 2))
                    .unwrap_or([0.0; MAX_ORDER]);
                let pk: Vec<f64> = (1..=MAX_ORDER).map(|k| norm.powi(k as i32) * psi[k - 1]).collect();
                let qk: Vec<f64> = (1..=MAX_ORDER).map(|k| norm.powi(k as i32) * pair[k - 1]).collect();
                for k in 0..MAX_ORDER {
                    psi_series[k].add(pk[k], norm, r_max);
                    pair_series[k].add(qk[k], norm, r_max);
                }
                let root = (1.0 + norm).sqrt();
                a0.add(pk[0] * root, norm, r_max);
                a2.add(pk[0] * norm * norm * root, norm, r_max);
                a_inv.add(pk[0] * root / norm, norm, r_max);
                a3.add(pk[0] * norm.powi(3) * root, norm, r_max);
                q2s.add((qk[1] + g_sup[1] * pk[1]) * 4.0 * norm * norm * (2.0 * norm).sqrt(), norm, r_max);
                let m = diagonal_eam(&g_sup, &pk, &qk);
                entries.push(DecayEntry {
                    direction: rho.components().to_vec(),
                    norm,
                    m,
                });
            }
            let total = |s: &Series| {
                let t = s.tail(d, r_max);
                (s.partial, t)
            };
            let p: Vec<(f64, f64)> = psi_series.iter().map(total).collect();
            let q: Vec<(f64, f64)> = pair_series.iter().map(total).collect();
            // combine partial sums and full bounds through the partition formula
            let combine = |v: &dyn Fn(usize) -> f64, w: &dyn Fn(usize) -> f64| -> [f64; MAX_ORDER] {
                let mut out = [0.0; MAX_ORDER];
                let (p1, p2, p3, p4) = (v(0), v(1), v(2), v(3));
                out[0] = w(0) + g_sup[1] * p1;
                out[1] = w(1) + g_sup[2] * p1 * p1 + g_sup[1] * p2;
                out[2] = w(2) + g_sup[3] * p1.powi(3) + 3.0 * g_sup[2] * p1 * p2 + g_sup[1] * p3;
                out[3] = w(3)
                    + g_sup[4] * p1.powi(4)
                    + 6.0 * g_sup[3] * p1 * p1 * p2
                    + g_sup[2] * (4.0 * p1 * p3 + 3.0 * p2 * p2)
                    + g_sup[1] * p4;
                out
            };
            let partial = combine(&|k| p[k].0, &|k| q[k].0);
            let full = combine(&|k| p[k].0 + p[k].1, &|k| q[k].0 + q[k].1);
            for j in 0..MAX_ORDER {
                let tail = full[j] - partial[j];
                constants.push(DecayConstant {
                    name: format!("M{}", j + 1),
                    partial_sum: partial[j],
                    tail_bound: if tail.is_finite() { tail } else { f64::INFINITY },
                    finite: tail.is_finite(),
                });
            }
            // j = 2 weights bounded through (a + b)^k ≤ 2^{k-1}(a^k + b^k)
            // and |ρ × ς| + |ρ| + |ς| ≤ (1 + |ρ|)(1 + |ς|)
            let (a0p, a0t) = total(&a0);
            let (a2p, a2t) = total(&a2);
            let (aip, ait) = total(&a_inv);
            let (a3p, a3t) = total(&a3);
            let (dp, dt) = total(&q2s);
            let ms_partial = 4.0 * g_sup[2] * a0p * a2p + dp;
            let ms_full = 4.0 * g_sup[2] * (a0p + a0t) * (a2p + a2t) + dp + dt;
            let md_partial = 4.0 * g_sup[2] * (a2p * a0p + aip * a3p) + 2.0 * dp;
            let md_full =
                4.0 * g_sup[2] * ((a2p + a2t) * (a0p + a0t) + (aip + ait) * (a3p + a3t)) + 2.0 * (dp + dt);
            for (name, part, full) in [("Ms2", ms_partial, ms_full), ("Md2", md_partial, md_full)] {
                let tail = full - part;
                constants.push(DecayConstant {
                    name: name.into(),
                    partial_sum: part,
                    tail_bound: if tail.is_finite() { tail } else { f64::INFINITY },
                    finite: tail.is_finite(),
                });
            }
        }
        PotentialKind::HarmonicChain { .. } => unreachable!(),
    }
    let divergent = constants.iter().any(|c| !c.finite);
    Ok(DecayReport {
        kappa,
        r_max,
        exponent,
        entries,
        constants,
        divergent,
    })
}

fn diagonal_eam(g: &[f64], p: &[f64], q: &[f64]) -> [f64; MAX_ORDER] {
    [
        q[0] + g[1] * p[0],
        q[1] + g[2] * p[0] * p[0] + g[1] * p[1],
        q[2] + g[3] * p[0].powi(3) + 3.0 * g[2] * p[0] * p[1] + g[1] * p[2],
        q[3] + g[4] * p[0].powi(4)
            + 6.0 * g[3] * p[0] * p[0] * p[1]
            + g[2] * (4.0 * p[0] * p[2] + 3.0 * p[1] * p[1])
            + g[1] * p[3],
    ]
}

fn harmonic_report(a1: f64, a2: f64, kappa: f64, r_max: f64) -> DecayReport {
    let mut entries = Vec::new();
    for (rho, a) in [(-2i64, a2), (-1, a1), (1, a1), (2, a2)] {
        let norm = rho.unsigned_abs() as f64;
        entries.push(DecayEntry {
            direction: vec![rho],
            norm,
            m: [norm * 0.5 * a.abs() * kappa * norm, norm * norm * 0.5 * a.abs(), 0.0, 0.0],
        });
    }
    let mut constants = Vec::new();
    for j in 0..MAX_ORDER {
        constants.push(DecayConstant {
            name: format!("M{}", j + 1),
            partial_sum: entries.iter().map(|e| e.m[j]).sum(),
            tail_bound: 0.0,
            finite: true,
        });
    }
    for j in 2..=MAX_ORDER {
        let ms: f64 = entries
            .iter()
            .map(|e| {
                let t = j as f64 * e.norm;
                e.m[j - 1] * t * t * diagonal_weight(j, e.norm)
            })
            .sum();
        let md: f64 = entries
            .iter()
            .map(|e| {
                let t = j as f64 * e.norm;
                e.m[j - 1] * t.powi(3) / e.norm * diagonal_weight(j, e.norm)
            })
            .sum();
        for (name, v) in [(format!("Ms{j}"), ms), (format!("Md{j}"), md)] {
            constants.push(DecayConstant {
                name,
                partial_sum: v,
                tail_bound: 0.0,
                finite: true,
            });
        }
    }
    DecayReport {
        kappa,
        r_max,
        exponent: None,
        entries,
        constants,
        divergent: false,
    }
}
