//! Q1 nodal basis, first-order interpolant, the B-spline quasi-interpolant,
//! the bond localization kernel `χ_{ξ,ρ}` and the smooth nodal interpolant.
//!
//! All evaluators take points in lattice (supercell) coordinates; displacement
//! fields are periodic, so points outside `[0, N)^d` wrap.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{fftn, grid_coords};
use crate::lattice::{Coord, Direction, DisplacementField};
use crate::quadrature::GaussLegendre;

#[inline]
pub fn hat(s: f64) -> f64 {
    (1.0 - s.abs()).max(0.0)
}

/// `ζ(x) = Π_a max(0, 1 - |x_a|)`.
pub fn zeta(x: &[f64]) -> f64 {
    x.iter().map(|&v| hat(v)).product()
}

/// Centered cubic B-spline `ζ*ζ` in one variable, support `[-2, 2]`.
#[inline]
pub fn bspline3(s: f64) -> f64 {
    let a = s.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        let t = 2.0 - a;
        t * t * t / 6.0
    } else {
        0.0
    }
}

#[inline]
pub fn bspline3_deriv(s: f64) -> f64 {
    let a = s.abs();
    let d = if a < 1.0 {
        -2.0 * a + 1.5 * a * a
    } else if a < 2.0 {
        let t = 2.0 - a;
        -0.5 * t * t
    } else {
        0.0
    };
    d * s.signum()
}

/// Sum of `f(ξ)` over the lattice points whose box `ξ + [lo, hi]^d` contains `x`
/// in each axis, i.e. `ξ_a ∈ [x_a - hi_a, x_a - lo_a]`.
fn for_sites_in_window(x: &[f64], lo: &[f64], hi: &[f64], mut f: impl FnMut(&Coord)) {
    let d = x.len();
    let mut start = [0i64; 3];
    let mut end = [0i64; 3];
    for a in 0..d {
        start[a] = (x[a] - hi[a]).ceil() as i64;
        end[a] = (x[a] - lo[a]).floor() as i64;
        if start[a] > end[a] {
            return;
        }
    }
    let mut c: Coord = [0; 3];
    c[..d].copy_from_slice(&start[..d]);
    loop {
        f(&c);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if c[axis] < end[axis] {
                c[axis] += 1;
                break;
            }
            c[axis] = start[axis];
        }
    }
}

/// Q1 nodal interpolant `Σ_ξ u(ξ) ζ(x - ξ)`.
pub fn nodal_interp(u: &DisplacementField, x: &[f64]) -> Vec<f64> {
    let d = u.dim();
    let mut out = vec![0.0; d];
    let lo = [-1.0; 3];
    let hi = [1.0; 3];
    for_sites_in_window(x, &lo[..d], &hi[..d], |c| {
        let w: f64 = (0..d).map(|a| hat(x[a] - c[a] as f64)).product();
        if w != 0.0 {
            for (o, v) in out.iter_mut().zip(u.at(&c[..d])) {
                *o += w * v;
            }
        }
    });
    out
}

/// Gradient of the Q1 interpolant, `[i * d + a] = ∂_a v_i`, taken from the
/// cell containing `x` (cells are `[c, c+1)` per axis).
pub fn nodal_grad(u: &DisplacementField, x: &[f64]) -> Vec<f64> {
    let d = u.dim();
    let mut out = vec![0.0; d * d];
    let mut cell = [0i64; 3];
    let mut s = [0.0; 3];
    for a in 0..d {
        cell[a] = x[a].floor() as i64;
        s[a] = x[a] - cell[a] as f64;
    }
    for corner in 0..(1usize << d) {
        let mut c = cell;
        let mut bits = [0usize; 3];
        for a in 0..d {
            bits[a] = (corner >> a) & 1;
            c[a] += bits[a] as i64;
        }
        let val = u.at(&c[..d]);
        for a in 0..d {
            let mut w = if bits[a] == 1 { 1.0 } else { -1.0 };
            for b in 0..d {
                if b != a {
                    w *= if bits[b] == 1 { s[b] } else { 1.0 - s[b] };
                }
            }
            for i in 0..d {
                out[i * d + a] += w * val[i];
            }
        }
    }
    out
}

/// Quasi-interpolant `ṽ = ζ * v = Σ_ξ u(ξ) B(x - ξ)` with `B` the tensor cubic
/// B-spline.
pub fn quasi_interp(u: &DisplacementField, x: &[f64]) -> Vec<f64> {
    let d = u.dim();
    let mut out = vec![0.0; d];
    let lo = [-2.0; 3];
    let hi = [2.0; 3];
    for_sites_in_window(x, &lo[..d], &hi[..d], |c| {
        let w: f64 = (0..d).map(|a| bspline3(x[a] - c[a] as f64)).product();
        if w != 0.0 {
            for (o, v) in out.iter_mut().zip(u.at(&c[..d])) {
                *o += w * v;
            }
        }
    });
    out
}

/// Gradient of [`quasi_interp`], `[i * d + a]`.
pub fn quasi_interp_grad(u: &DisplacementField, x: &[f64]) -> Vec<f64> {
    let d = u.dim();
    let mut out = vec![0.0; d * d];
    let lo = [-2.0; 3];
    let hi = [2.0; 3];
    for_sites_in_window(x, &lo[..d], &hi[..d], |c| {
        let vals = u.at(&c[..d]);
        for a in 0..d {
            let mut w = 1.0;
            for b in 0..d {
                let s = x[b] - c[b] as f64;
                w *= if b == a { bspline3_deriv(s) } else { bspline3(s) };
            }
            if w != 0.0 {
                for i in 0..d {
                    out[i * d + a] += w * vals[i];
                }
            }
        }
    });
    out
}

/// `χ_{ξ,ρ}(x) = ∫_0^1 ζ(ξ + tρ - x) dt`, integrated exactly: the integrand is
/// a product of `d` piecewise-linear factors in `t`, polynomial of degree
/// `<= d` between breakpoints.
pub fn chi_eval(xi: &[i64], rho: &Direction, x: &[f64]) -> f64 {
    let d = x.len();
    let r = rho.components();
    let mut breaks: Vec<f64> = Vec::with_capacity(3 * d);
    let mut factor = 1.0;
    for a in 0..d {
        let base = xi[a] as f64 - x[a];
        if r[a] == 0 {
            factor *= hat(base);
            if factor == 0.0 {
                return 0.0;
            }
        } else {
            let ra = r[a] as f64;
            for k in [-1.0, 0.0, 1.0] {
                let t = (k - base) / ra;
                if t > 0.0 && t < 1.0 {
                    breaks.push(t);
                }
            }
        }
    }
    // Degree <= 3 on each piece; two Gauss points are exact.
    let rule = gauss2();
    factor
        * rule.integrate_piecewise(0.0, 1.0, &breaks, |t| {
            (0..d)
                .filter(|&a| r[a] != 0)
                .map(|a| hat(xi[a] as f64 + t * r[a] as f64 - x[a]))
                .product()
        })
}

fn gauss2() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(2))
}

/// `∇_ρ χ_{ξ,ρ}(x) = ζ(ξ - x) - ζ(ξ + ρ - x)`.
pub fn grad_rho_chi(xi: &[i64], rho: &Direction, x: &[f64]) -> f64 {
    let d = x.len();
    let r = rho.components();
    let a: f64 = (0..d).map(|k| hat(xi[k] as f64 - x[k])).product();
    let b: f64 = (0..d).map(|k| hat(xi[k] as f64 + r[k] as f64 - x[k])).product();
    a - b
}

/// Calls `f(ξ)` for every lattice point (unwrapped, in `Z^d`) whose kernel
/// `χ_{ξ,ρ}` may be nonzero at `x`.
pub fn chi_support(rho: &Direction, x: &[f64], f: impl FnMut(&Coord)) {
    let d = x.len();
    let r = rho.components();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    // ξ_a ∈ (x_a - 1 - max(0, ρ_a), x_a + 1 - min(0, ρ_a))
    for a in 0..d {
        lo[a] = -1.0 + r[a].min(0) as f64;
        hi[a] = 1.0 + r[a].max(0) as f64;
    }
    for_sites_in_window(x, &lo[..d], &hi[..d], f);
}

/// Discrete symbol of the cubic B-spline sampled at the lattice, per axis.
fn bspline_symbol(k: usize, n: usize) -> f64 {
    let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
    2.0 / 3.0 + theta.cos() / 3.0
}

/// Smooth nodal interpolant: returns `w` with `quasi_interp(w, ξ) = u(ξ)` at
/// every site, by periodic deconvolution with the B-spline symbol.
pub fn smooth_nodal_interp(u: &DisplacementField) -> Result<DisplacementField> {
    let lat = u.lattice();
    let d = lat.dim();
    let n = lat.cells();
    let total = lat.num_sites();
    let mut out = DisplacementField::zeros(lat);
    let symbol: Vec<f64> = (0..total)
        .map(|idx| {
            let g = grid_coords(idx, n, d);
            (0..d).map(|a| bspline_symbol(g[a], n)).product()
        })
        .collect();
    if let Some(s) = symbol.iter().find(|s| s.abs() < 1e-14) {
        return Err(Error::Numerical(format!("singular B-spline symbol {s}")));
    }
    for i in 0..d {
        let mut c: Vec<Complex64> = (0..total).map(|s| Complex64::new(u.get(s)[i], 0.0)).collect();
        fftn(&mut c, n, d, false);
        for (v, s) in c.iter_mut().zip(&symbol) {
            *v /= *s;
        }
        fftn(&mut c, n, d, true);
        for (site, v) in c.iter().enumerate() {
            out.get_mut(site)[i] = v.re;
        }
    }
    Ok(out)
}

/// Values of the quasi-interpolant at the lattice sites, `Σ_η u(η) B(ξ - η)`.
pub fn quasi_interp_at_sites(u: &DisplacementField) -> DisplacementField {
    let lat = u.lattice();
    let d = lat.dim();
    let mut out = DisplacementField::zeros(lat);
    for site in 0..lat.num_sites() {
        let c = lat.coords(site);
        let x: Vec<f64> = c[..d].iter().map(|&v| v as f64).collect();
        let v = quasi_interp(u, &x);
        out.get_mut(site).copy_from_slice(&v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(lat: &LatticeSpec, seed: u64) -> DisplacementField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..lat.num_sites() * lat.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        DisplacementField::from_values(lat, vals).unwrap()
    }

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta(&[0.0]), 1.0);
        assert_eq!(zeta(&[1.0, 0.0]), 0.0);
        assert_eq!(zeta(&[0.0, -2.0]), 0.0);
        assert!((zeta(&[0.5, 0.5]) - 0.25).abs() < 1e-16);
        assert_eq!(zeta(&[0.3, -0.2]), zeta(&[-0.3, 0.2]));
    }

    #[test]
    fn bspline_is_hat_convolution() {
        // direct quadrature of ∫ hat(y) hat(s - y) dy on the kink-aware pieces
        let g = GaussLegendre::new(3);
        for &s in &[0.0, 0.3, 1.0, 1.7, 2.5, -0.4] {
            let breaks = [-1.0, 0.0, 1.0, s - 1.0, s, s + 1.0];
            let v = g.integrate_piecewise(-3.0, 3.0, &breaks, |y| hat(y) * hat(s - y));
            assert!((v - bspline3(s)).abs() < 1e-14, "s = {s}");
            let h = 1e-6;
            let fd = (bspline3(s + h) - bspline3(s - h)) / (2.0 * h);
            assert!((fd - bspline3_deriv(s)).abs() < 1e-8);
        }
        assert!((bspline3(0.0) - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn nodal_interp_reproduces_sites_and_affine() {
        let lat = LatticeSpec::cubic(2, 5).unwrap();
        let u = random_field(&lat, 3);
        for site in 0..lat.num_sites() {
            let c = lat.coords(site);
            let x = [c[0] as f64, c[1] as f64];
            assert_eq!(nodal_interp(&u, &x), u.get(site).to_vec());
        }
        let lat1 = LatticeSpec::cubic(1, 6).unwrap();
        let u1 = random_field(&lat1, 5);
        let m = nodal_interp(&u1, &[2.5])[0];
        assert!((m - 0.5 * (u1.get(2)[0] + u1.get(3)[0])).abs() < 1e-15);
        // affine reproduction away from the periodic seam
        let aff = DisplacementField::from_fn(&lat, |x| vec![0.3 + 0.2 * x[0] - 0.1 * x[1], 1.0 + x[1]]);
        let x = [1.3, 2.6];
        let v = nodal_interp(&aff, &x);
        assert!((v[0] - (0.3 + 0.26 - 0.26)).abs() < 1e-14);
        assert!((v[1] - 3.6).abs() < 1e-14);
        let g = nodal_grad(&aff, &x);
        assert!((g[0] - 0.2).abs() < 1e-14 && (g[1] + 0.1).abs() < 1e-14);
        assert!((g[2]).abs() < 1e-14 && (g[3] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quasi_interp_examples() {
        let lat = LatticeSpec::cubic(1, 8).unwrap();
        let mut imp = DisplacementField::zeros(&lat);
        imp.get_mut(0)[0] = 1.0;
        assert!((quasi_interp(&imp, &[0.0])[0] - 2.0 / 3.0).abs() < 1e-15);
        let c = DisplacementField::from_fn(&lat, |_| vec![-1.25]);
        assert!((quasi_interp(&c, &[3.3])[0] + 1.25).abs() < 1e-14);
        let lat2 = LatticeSpec::cubic(2, 10).unwrap();
        let aff = DisplacementField::from_fn(&lat2, |x| vec![0.5 * x[0] - x[1], 2.0 + 0.25 * x[1]]);
        let x = [4.2, 5.7];
        let v = quasi_interp(&aff, &x);
        assert!((v[0] - (2.1 - 5.7)).abs() < 1e-13);
        assert!((v[1] - (2.0 + 0.25 * 5.7)).abs() < 1e-13);
    }

    #[test]
    fn chi_examples() {
        let rho = Direction::new(vec![1]).unwrap();
        assert!((chi_eval(&[0], &rho, &[0.5]) - 0.75).abs() < 1e-15);
        let far = Direction::new(vec![2, 1]).unwrap();
        assert_eq!(chi_eval(&[0, 0], &far, &[5.0, -3.5]), 0.0);
        // brute force: fine composite rule on the defining integral
        let rho = Direction::new(vec![2, -1]).unwrap();
        let x = [0.37, -0.21];
        let xi = [0i64, 0];
        let g = GaussLegendre::new(4);
        let breaks: Vec<f64> = (1..4000).map(|k| k as f64 / 4000.0).collect();
        let brute = g.integrate_piecewise(0.0, 1.0, &breaks, |t| {
            zeta(&[xi[0] as f64 + 2.0 * t - x[0], xi[1] as f64 - t - x[1]])
        });
        assert!((brute - chi_eval(&xi, &rho, &x)).abs() < 1e-9);
    }

    #[test]
    fn chi_support_covers_all_nonzero_kernels() {
        let rho = Direction::new(vec![-2, 1]).unwrap();
        let x = [0.4, 0.9];
        let mut inside = Vec::new();
        chi_support(&rho, &x, |c| inside.push([c[0], c[1]]));
        for i in -6..6 {
            for j in -6..6 {
                let v = chi_eval(&[i, j], &rho, &x);
                if v > 0.0 {
                    assert!(inside.contains(&[i, j]), "missing {i},{j}");
                }
            }
        }
    }

    #[test]
    fn smooth_nodal_interp_inverts_quasi_interp() {
        for (d, n) in [(1usize, 9usize), (2, 6)] {
            let lat = LatticeSpec::cubic(d, n).unwrap();
            let u = random_field(&lat, 11);
            let w = smooth_nodal_interp(&u).unwrap();
            let back = quasi_interp_at_sites(&w);
            for (a, b) in back.values().iter().zip(u.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let lat = LatticeSpec::cubic(1, 8).unwrap();
        let c = DisplacementField::from_fn(&lat, |_| vec![0.7]);
        let w = smooth_nodal_interp(&c).unwrap();
        for v in w.values() {
            assert!((v - 0.7).abs() < 1e-14);
        }
    }
}
