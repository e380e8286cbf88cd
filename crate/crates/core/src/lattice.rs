//! Periodic Bravais lattice supercells, displacement fields and finite
//! differences.
//!
//! The reference crystal is `A·Z^d`. Computations run on a periodic
//! supercell of `N^d` sites; sites are stored row-major (last axis fastest)
//! and every shift is reduced modulo `N` per axis.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::interpolation;
use crate::quadrature::GaussLegendre;

/// Integer site coordinates, padded with zeros beyond the lattice dimension.
pub type Coord = [i64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    dim: usize,
    orientation: DMatrix<f64>,
    cells: usize,
}

impl LatticeSpec {
    pub fn new(dim: usize, orientation: DMatrix<f64>, cells: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Lattice(format!("dimension {dim} not in 1..=3")));
        }
        if orientation.nrows() != dim || orientation.ncols() != dim {
            return Err(Error::Lattice(format!(
                "orientation matrix is {}x{}, expected {dim}x{dim}",
                orientation.nrows(),
                orientation.ncols()
            )));
        }
        let det = orientation.determinant();
        if !(det > 0.0) {
            return Err(Error::Lattice(format!(
                "orientation matrix must have positive determinant, got {det}"
            )));
        }
        if cells < 4 {
            return Err(Error::Lattice(format!(
                "supercell needs at least 4 sites per axis, got {cells}"
            )));
        }
        Ok(Self {
            dim,
            orientation,
            cells,
        })
    }

    /// Lattice with `A = I`.
    pub fn cubic(dim: usize, cells: usize) -> Result<Self> {
        Self::new(dim, DMatrix::identity(dim, dim), cells)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn orientation(&self) -> &DMatrix<f64> {
        &self.orientation
    }

    /// Sites per axis.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn num_sites(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn coords(&self, site: usize) -> Coord {
        let n = self.cells;
        let mut c = [0i64; 3];
        let mut rem = site;
        for axis in (0..self.dim).rev() {
            c[axis] = (rem % n) as i64;
            rem /= n;
        }
        c
    }

    /// Row-major index of arbitrary integer coordinates, wrapped periodically.
    pub fn index(&self, coords: &[i64]) -> usize {
        let n = self.cells as i64;
        coords[..self.dim]
            .iter()
            .fold(0usize, |acc, &c| acc * self.cells + c.rem_euclid(n) as usize)
    }

    /// Site reached from `site` by the lattice direction `rho`.
    pub fn shift(&self, site: usize, rho: &Direction) -> usize {
        let mut c = self.coords(site);
        for (axis, r) in rho.components().iter().enumerate() {
            c[axis] += r;
        }
        self.index(&c)
    }

    /// Checks that the stencil cannot alias under the periodic wrap.
    pub fn check_stencil(&self, stencil: &StencilSet) -> Result<()> {
        if stencil.dim() != self.dim {
            return Err(Error::Lattice(format!(
                "stencil dimension {} does not match lattice dimension {}",
                stencil.dim(),
                self.dim
            )));
        }
        let reach = stencil.max_component();
        if 2 * reach as usize > self.cells {
            return Err(Error::Lattice(format!(
                "stencil reach {reach} exceeds half the supercell ({} sites)",
                self.cells
            )));
        }
        Ok(())
    }
}

/// A nonzero lattice direction `rho ∈ Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction {
    comps: Vec<i64>,
}

impl Direction {
    pub fn new(comps: Vec<i64>) -> Result<Self> {
        if comps.is_empty() || comps.len() > 3 {
            return Err(Error::Lattice(format!(
                "direction must have 1..=3 components, got {}",
                comps.len()
            )));
        }
        if comps.iter().all(|&c| c == 0) {
            return Err(Error::Lattice("direction must be nonzero".into()));
        }
        Ok(Self { comps })
    }

    pub fn components(&self) -> &[i64] {
        &self.comps
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.comps.iter().map(|&c| c as f64).collect()
    }

    pub fn norm(&self) -> f64 {
        (self.comps.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt()
    }

    pub fn negated(&self) -> Self {
        Self {
            comps: self.comps.iter().map(|c| -c).collect(),
        }
    }
}

/// The finite set of interaction directions `0 < |rho| <= R_cut`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilSet {
    dim: usize,
    cutoff: f64,
    directions: Vec<Direction>,
    negation: Vec<usize>,
}

impl StencilSet {
    /// All `rho ∈ Z^d` with `0 < |rho| <= cutoff`, in lexicographic order.
    pub fn new(dim: usize, cutoff: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Lattice(format!("dimension {dim} not in 1..=3")));
        }
        if !(cutoff >= 1.0) {
            return Err(Error::Lattice(format!(
                "cutoff {cutoff} must reach the nearest neighbours (>= 1)"
            )));
        }
        let r = cutoff.floor() as i64;
        let mut dirs = Vec::new();
        let mut c = vec![-r; dim];
        loop {
            let n2: i64 = c.iter().map(|x| x * x).sum();
            if n2 > 0 && (n2 as f64) <= cutoff * cutoff + 1e-12 {
                dirs.push(Direction { comps: c.clone() });
            }
            // odometer increment
            let mut axis = dim;
            loop {
                if axis == 0 {
                    return Self::from_directions(dim, cutoff, dirs);
                }
                axis -= 1;
                if c[axis] < r {
                    c[axis] += 1;
                    break;
                }
                c[axis] = -r;
            }
        }
    }

    pub fn from_directions(dim: usize, cutoff: f64, mut directions: Vec<Direction>) -> Result<Self> {
        if directions.iter().any(|d| d.dim() != dim) {
            return Err(Error::Lattice("direction dimension mismatch".into()));
        }
        directions.sort();
        directions.dedup();
        let mut negation = Vec::with_capacity(directions.len());
        for d in &directions {
            let neg = d.negated();
            match directions.binary_search(&neg) {
                Ok(j) => negation.push(j),
                Err(_) => {
                    return Err(Error::Lattice(format!(
                        "stencil not closed under negation: {:?} present, {:?} missing",
                        d.components(),
                        neg.components()
                    )))
                }
            }
        }
        for axis in 0..dim {
            let mut e = vec![0; dim];
            e[axis] = 1;
            if directions.binary_search(&Direction { comps: e }).is_err() {
                return Err(Error::Lattice(format!(
                    "stencil misses the nearest neighbour along axis {axis}"
                )));
            }
        }
        Ok(Self {
            dim,
            cutoff,
            directions,
            negation,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn direction(&self, i: usize) -> &Direction {
        &self.directions[i]
    }

    /// Index of `-rho` for the direction with index `i`.
    pub fn negation_of(&self, i: usize) -> usize {
        self.negation[i]
    }

    pub fn position(&self, rho: &Direction) -> Option<usize> {
        self.directions.binary_search(rho).ok()
    }

    pub fn max_component(&self) -> i64 {
        self.directions
            .iter()
            .flat_map(|d| d.comps.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Per-site vectors `u(xi) ∈ R^d` on a periodic supercell.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    lattice: LatticeSpec,
    values: Vec<f64>,
}

impl DisplacementField {
    pub fn zeros(lattice: &LatticeSpec) -> Self {
        Self {
            values: vec![0.0; lattice.num_sites() * lattice.dim()],
            lattice: lattice.clone(),
        }
    }

    pub fn from_values(lattice: &LatticeSpec, values: Vec<f64>) -> Result<Self> {
        let expected = lattice.num_sites() * lattice.dim();
        if values.len() != expected {
            return Err(Error::Lattice(format!(
                "field has {} entries, expected {expected}",
                values.len()
            )));
        }
        Ok(Self {
            lattice: lattice.clone(),
            values,
        })
    }

    /// Fills every site from `f(coords)`.
    pub fn from_fn(lattice: &LatticeSpec, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let d = lattice.dim();
        let mut values = Vec::with_capacity(lattice.num_sites() * d);
        for site in 0..lattice.num_sites() {
            let c = lattice.coords(site);
            let x: Vec<f64> = c[..d].iter().map(|&v| v as f64).collect();
            let v = f(&x);
            assert_eq!(v.len(), d, "field callback must return d components");
            values.extend_from_slice(&v);
        }
        Self {
            lattice: lattice.clone(),
            values,
        }
    }

    /// Homogeneous field `u(xi) = F xi` (not periodic unless `F = 0`; the
    /// caller decides how the wrap is treated).
    pub fn homogeneous(lattice: &LatticeSpec, grad: &DMatrix<f64>) -> Self {
        Self::from_fn(lattice, |x| {
            let d = x.len();
            (0..d)
                .map(|i| (0..d).map(|a| grad[(i, a)] * x[a]).sum())
                .collect()
        })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, site: usize) -> &[f64] {
        let d = self.dim();
        &self.values[site * d..(site + 1) * d]
    }

    pub fn get_mut(&mut self, site: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.values[site * d..(site + 1) * d]
    }

    /// Value at arbitrary integer coordinates (periodic).
    pub fn at(&self, coords: &[i64]) -> &[f64] {
        self.get(self.lattice.index(coords))
    }

    /// `D_rho u(xi) = u(xi + rho) - u(xi)`.
    pub fn finite_difference(&self, site: usize, rho: &Direction) -> Vec<f64> {
        let j = self.lattice.shift(site, rho);
        self.get(j)
            .iter()
            .zip(self.get(site))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// The stencil `{D_rho u(xi)}` flattened with stride `d`, in stencil order.
    pub fn stencil(&self, site: usize, set: &StencilSet) -> Vec<f64> {
        let mut out = vec![0.0; set.len() * self.dim()];
        self.stencil_into(site, set, &mut out);
        out
    }

    pub fn stencil_into(&self, site: usize, set: &StencilSet, out: &mut [f64]) {
        let d = self.dim();
        let base = self.get(site);
        for (k, rho) in set.directions().iter().enumerate() {
            let nb = self.get(self.lattice.shift(site, rho));
            for i in 0..d {
                out[k * d + i] = nb[i] - base[i];
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for chunk in self.values.chunks_exact(d) {
            for i in 0..d {
                m[i] += chunk[i];
            }
        }
        let n = self.lattice.num_sites() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        let d = self.dim();
        for chunk in self.values.chunks_exact_mut(d) {
            for i in 0..d {
                chunk[i] -= m[i];
            }
        }
    }

    /// `sqrt(sum_xi |u(xi)|^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    /// Point reflection `u(xi) -> -u(-xi)`.
    pub fn point_reflected(&self) -> Self {
        let d = self.dim();
        let mut out = Self::zeros(&self.lattice);
        for site in 0..self.lattice.num_sites() {
            let c = self.lattice.coords(site);
            let neg: Vec<i64> = c[..d].iter().map(|v| -v).collect();
            let src = self.at(&neg).to_vec();
            for (o, s) in out.get_mut(site).iter_mut().zip(src) {
                *o = -s;
            }
        }
        out
    }

    /// Largest `|D_rho u(xi)| / |rho|` over all sites and stencil directions.
    pub fn max_strain(&self, set: &StencilSet) -> f64 {
        let mut worst = 0.0f64;
        let d = self.dim();
        let mut buf = vec![0.0; set.len() * d];
        for site in 0..self.lattice.num_sites() {
            self.stencil_into(site, set, &mut buf);
            for (k, rho) in set.directions().iter().enumerate() {
                let g = &buf[k * d..(k + 1) * d];
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(n / rho.norm());
            }
        }
        worst
    }
}

/// Norm index for [`grad_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormIndex {
    One,
    Two,
    Infinity,
}

impl NormIndex {
    pub fn from_p(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Self::One)
        } else if p == 2.0 {
            Ok(Self::Two)
        } else if p == f64::INFINITY {
            Ok(Self::Infinity)
        } else {
            Err(Error::UnsupportedNorm(p))
        }
    }
}

/// `L^p` norm over the supercell of the gradient of the Q1 nodal interpolant.
///
/// `p = 2` and `p = ∞` are exact; `p = 1` is exact in 1D and uses an
/// 8-point tensor Gauss rule per cell otherwise.
pub fn grad_norm(u: &DisplacementField, p: NormIndex) -> f64 {
    let lat = u.lattice();
    let d = lat.dim();
    let rule = match p {
        NormIndex::Two => GaussLegendre::new(2),
        NormIndex::One => GaussLegendre::new(if d == 1 { 1 } else { 8 }),
        NormIndex::Infinity => GaussLegendre::new(1),
    };
    let mut acc = 0.0f64;
    let mut x = vec![0.0; d];
    for cell in 0..lat.num_sites() {
        let c = lat.coords(cell);
        match p {
            NormIndex::Infinity => {
                // |grad v|^2 is convex along each coordinate inside a cell, so
                // the maximum sits at a corner; evaluate the one-sided limits.
                for corner in 0..(1usize << d) {
                    for a in 0..d {
                        let bit = (corner >> a) & 1;
                        x[a] = c[a] as f64 + if bit == 1 { 1.0 - 1e-13 } else { 1e-13 };
                    }
                    let g = interpolation::nodal_grad(u, &x);
                    acc = acc.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
                }
            }
            _ => {
                let npts = rule.len();
                let total = npts.pow(d as u32);
                for q in 0..total {
                    let mut w = 1.0;
                    let mut rem = q;
                    for a in 0..d {
                        let k = rem % npts;
                        rem /= npts;
                        x[a] = c[a] as f64 + rule.nodes()[k];
                        w *= rule.weights()[k];
                    }
                    let g = interpolation::nodal_grad(u, &x);
                    let n2: f64 = g.iter().map(|v| v * v).sum();
                    acc += w * if p == NormIndex::Two { n2 } else { n2.sqrt() };
                }
            }
        }
    }
    match p {
        NormIndex::Two => acc.sqrt(),
        _ => acc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn chain(n: usize) -> LatticeSpec {
        LatticeSpec::cubic(1, n).unwrap()
    }

    #[test]
    fn rejects_bad_lattices() {
        assert!(LatticeSpec::cubic(1, 3).is_err());
        assert!(LatticeSpec::cubic(4, 8).is_err());
        let flipped = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(LatticeSpec::new(2, flipped, 8).is_err());
    }

    #[test]
    fn index_round_trips_and_wraps() {
        let lat = LatticeSpec::cubic(3, 5).unwrap();
        for site in 0..lat.num_sites() {
            assert_eq!(lat.index(&lat.coords(site)), site);
        }
        assert_eq!(lat.index(&[-1, 0, 0]), lat.index(&[4, 0, 0]));
        assert_eq!(lat.index(&[7, -6, 5]), lat.index(&[2, 4, 0]));
    }

    #[test]
    fn stencil_sets() {
        let s1 = StencilSet::new(1, 2.0).unwrap();
        let comps: Vec<i64> = s1.directions().iter().map(|d| d.components()[0]).collect();
        assert_eq!(comps, vec![-2, -1, 1, 2]);
        let s2 = StencilSet::new(2, 2f64.sqrt()).unwrap();
        assert_eq!(s2.len(), 8);
        let s3 = StencilSet::new(3, 1.0).unwrap();
        assert_eq!(s3.len(), 6);
        for s in [&s1, &s2, &s3] {
            for i in 0..s.len() {
                assert_eq!(s.direction(s.negation_of(i)), &s.direction(i).negated());
            }
        }
        let d = |v: Vec<i64>| Direction::new(v).unwrap();
        assert!(StencilSet::from_directions(1, 1.0, vec![d(vec![1])]).is_err());
        assert!(StencilSet::from_directions(1, 2.0, vec![d(vec![2]), d(vec![-2])]).is_err());
        assert!(Direction::new(vec![0, 0]).is_err());
        assert!(StencilSet::new(1, 0.5).is_err());
    }

    #[test]
    fn stencil_must_fit_supercell() {
        let lat = chain(4);
        assert!(lat.check_stencil(&StencilSet::new(1, 2.0).unwrap()).is_ok());
        assert!(lat.check_stencil(&StencilSet::new(1, 3.0).unwrap()).is_err());
    }

    #[test]
    fn finite_difference_examples() {
        let lat = chain(8);
        let c = DisplacementField::from_fn(&lat, |_| vec![3.5]);
        let rho = Direction::new(vec![2]).unwrap();
        for site in 0..8 {
            assert_eq!(c.finite_difference(site, &rho), vec![0.0]);
        }
        let s = DisplacementField::from_fn(&lat, |x| vec![(2.0 * PI * x[0] / 8.0).sin()]);
        let v = s.finite_difference(0, &rho)[0];
        assert!((v - 1.0).abs() < 1e-15);

        let lat2 = LatticeSpec::cubic(2, 6).unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[0.1, -0.2, 0.3, 0.05]);
        let u = DisplacementField::homogeneous(&lat2, &f);
        let rho = Direction::new(vec![1, -1]).unwrap();
        // away from the wrap the difference is F rho
        let site = lat2.index(&[2, 3]);
        let g = u.finite_difference(site, &rho);
        assert!((g[0] - 0.3).abs() < 1e-14 && (g[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn stencil_matches_finite_differences() {
        let lat = LatticeSpec::cubic(2, 7).unwrap();
        let set = StencilSet::new(2, 2.0).unwrap();
        let u = DisplacementField::from_fn(&lat, |x| {
            vec![(x[0] * 1.3 + x[1] * 0.7).sin(), (x[0] * x[1]).cos()]
        });
        for site in 0..lat.num_sites() {
            let g = u.stencil(site, &set);
            for (k, rho) in set.directions().iter().enumerate() {
                assert_eq!(&g[2 * k..2 * k + 2], u.finite_difference(site, rho).as_slice());
            }
        }
    }

    #[test]
    fn grad_norm_examples() {
        let lat = chain(4);
        let c = DisplacementField::from_fn(&lat, |_| vec![1.0]);
        assert_eq!(grad_norm(&c, NormIndex::Two), 0.0);
        let hat = DisplacementField::from_values(&lat, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let l2 = grad_norm(&hat, NormIndex::Two);
        assert!((l2 * l2 - 2.0).abs() < 1e-14);
        assert!((grad_norm(&hat, NormIndex::One) - 2.0).abs() < 1e-14);
        assert!((grad_norm(&hat, NormIndex::Infinity) - 1.0).abs() < 1e-12);
        assert!(NormIndex::from_p(3.0).is_err());
    }

    #[test]
    fn grad_norm_of_q1_interpolant_in_2d() {
        // u = (x0, 0) on the cell [0,1]^2 only through a single hat: check the
        // exact value of a 2D hat, ∫|∇ζ|^2 = 4 * (2/3) = 8/3 per component.
        let lat = LatticeSpec::cubic(2, 4).unwrap();
        let mut u = DisplacementField::zeros(&lat);
        u.get_mut(lat.index(&[1, 1]))[0] = 1.0;
        let l2 = grad_norm(&u, NormIndex::Two);
        assert!((l2 * l2 - 8.0 / 3.0).abs() < 1e-13, "{}", l2 * l2);
    }
}
