//! Krylov and line-search building blocks shared by the static solvers.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    crate::potentials::pairwise_sum(&prods)
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub negative_curvature: bool,
}

/// Preconditioned conjugate gradients for `A x = b` with `x0 = 0`; stops at
/// `‖r‖ ≤ tol`, after `max_iter` steps, or on non-positive curvature.
pub(crate) fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        if norm(&r) <= tol {
            return CgOutcome { x, iterations: it, negative_curvature: false };
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            if it == 0 {
                x = z;
            }
            return CgOutcome { x, iterations: it, negative_curvature: true };
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { x, iterations: max_iter, negative_curvature: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let apply = |v: &[f64]| (0..3).map(|i| (0..3).map(|j| a[i][j] * v[j]).sum()).collect();
        let b = [1.0, -2.0, 0.5];
        let out = pcg(apply, |r: &[f64]| r.to_vec(), &b, 1e-14, 50);
        let ax: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * out.x[j]).sum()).collect();
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-13);
        }
        assert!(out.iterations <= 3);
    }

    #[test]
    fn flags_negative_curvature() {
        let out = pcg(|v: &[f64]| v.iter().map(|x| -x).collect(), |r: &[f64]| r.to_vec(), &[1.0, 1.0], 1e-12, 10);
        assert!(out.negative_curvature);
    }
}
