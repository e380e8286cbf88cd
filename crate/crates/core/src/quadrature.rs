//! Gauss–Legendre rules and exact integration of piecewise polynomials over
//! intervals and convex polygons.

/// Gauss–Legendre rule mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = 0.5 * (1.0 - x);
            weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        // Weights above are for [-1,1] halved to [0,1].
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(a + h * t))
            .sum::<f64>()
            * h
    }

    /// Integrates over `[a, b]` split at every breakpoint that falls inside.
    pub fn integrate_piecewise(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        mut f: impl FnMut(f64) -> f64,
    ) -> f64 {
        let mut pts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|&t| t > a && t < b)
            .collect();
        pts.push(a);
        pts.push(b);
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        pts.windows(2)
            .map(|w| self.integrate(w[0], w[1], &mut f))
            .sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

pub type Point2 = [f64; 2];

/// Splits a convex polygon along the line `normal · x = offset`; returns the
/// parts with `normal · x <= offset` and `>= offset` (either may be empty).
pub fn split_polygon(poly: &[Point2], normal: Point2, offset: f64) -> (Vec<Point2>, Vec<Point2>) {
    let side = |p: &Point2| normal[0] * p[0] + normal[1] * p[1] - offset;
    let mut below = Vec::new();
    let mut above = Vec::new();
    let n = poly.len();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let sp = side(&p);
        let sq = side(&q);
        if sp <= 0.0 {
            below.push(p);
        }
        if sp >= 0.0 {
            above.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
            below.push(x);
            above.push(x);
        }
    }
    let clean = |v: Vec<Point2>| if polygon_area(&v).abs() < 1e-15 { Vec::new() } else { v };
    (clean(below), clean(above))
}

pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

/// Cuts the convex polygon by every line `normal · x = c`, `c ∈ Z`, for each
/// normal in `families` and returns the convex pieces.
pub fn cut_by_integer_lines(poly: Vec<Point2>, families: &[Point2]) -> Vec<Vec<Point2>> {
    let mut pieces = vec![poly];
    for &n in families {
        let mut next = Vec::new();
        for piece in pieces {
            let vals: Vec<f64> = piece.iter().map(|p| n[0] * p[0] + n[1] * p[1]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut rest = piece;
            let mut c = lo.floor() + 1.0;
            while c < hi - 1e-14 {
                if c > lo + 1e-14 {
                    let (below, above) = split_polygon(&rest, n, c);
                    if !below.is_empty() {
                        next.push(below);
                    }
                    rest = above;
                    if rest.is_empty() {
                        break;
                    }
                }
                c += 1.0;
            }
            if !rest.is_empty() {
                next.push(rest);
            }
        }
        pieces = next;
    }
    pieces
}

/// Integrates `f` over a convex polygon by fan triangulation and a collapsed
/// tensor Gauss rule on each triangle (exact for degree `2n - 2`).
pub fn integrate_polygon(poly: &[Point2], rule: &GaussLegendre, f: &mut impl FnMut(Point2) -> f64) -> f64 {
    let mut total = 0.0;
    for k in 1..poly.len().saturating_sub(1) {
        total += integrate_triangle([poly[0], poly[k], poly[k + 1]], rule, f);
    }
    total
}

fn integrate_triangle(tri: [Point2; 3], rule: &GaussLegendre, f: &mut impl FnMut(Point2) -> f64) -> f64 {
    let [a, b, c] = tri;
    let e1 = [b[0] - a[0], b[1] - a[1]];
    let e2 = [c[0] - a[0], c[1] - a[1]];
    let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    let mut acc = 0.0;
    for (&s, &ws) in rule.nodes().iter().zip(rule.weights()) {
        for (&t, &wt) in rule.nodes().iter().zip(rule.weights()) {
            // Duffy: (s, t) ∈ [0,1]^2 -> (s, (1-s) t) in the unit triangle.
            let r1 = s;
            let r2 = (1.0 - s) * t;
            let p = [a[0] + r1 * e1[0] + r2 * e2[0], a[1] + r1 * e1[1] + r2 * e2[1]];
            acc += ws * wt * (1.0 - s) * f(p);
        }
    }
    acc * jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_are_exact() {
        for n in 1..10 {
            let g = GaussLegendre::new(n);
            assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for deg in 0..(2 * n) {
                let v = g.integrate(-1.0, 2.0, |x| x.powi(deg as i32));
                let exact = (2f64.powi(deg as i32 + 1) - (-1f64).powi(deg as i32 + 1)) / (deg as f64 + 1.0);
                assert!((v - exact).abs() < 1e-12 * exact.abs().max(1.0), "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn piecewise_integration_of_kinked_function() {
        let g = GaussLegendre::new(2);
        let v = g.integrate_piecewise(-1.0, 1.0, &[0.0], |x| x.abs());
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn polygon_integration() {
        let rule = GaussLegendre::new(4);
        let square = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let pieces = cut_by_integer_lines(square.clone(), &[[2.0, -1.0], [1.0, 1.0]]);
        assert!(pieces.len() > 3);
        let area: f64 = pieces.iter().map(|p| polygon_area(p)).sum();
        assert!((area - 1.0).abs() < 1e-14);
        let mut f = |p: Point2| p[0] * p[0] * p[1] + 3.0 * p[1].powi(3);
        let whole = integrate_polygon(&square, &rule, &mut f);
        let split: f64 = pieces.iter().map(|p| integrate_polygon(p, &rule, &mut f)).sum();
        let exact = 1.0 / 6.0 + 0.75;
        assert!((whole - exact).abs() < 1e-14);
        assert!((split - exact).abs() < 1e-14);
        // kinked integrand: |x - y| is polynomial on each side of the diagonal
        let pieces = cut_by_integer_lines(square, &[[1.0, -1.0]]);
        let mut g = |p: Point2| (p[0] - p[1]).abs();
        let v: f64 = pieces.iter().map(|p| integrate_polygon(p, &rule, &mut g)).sum();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
    }
}
