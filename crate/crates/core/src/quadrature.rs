//! Cell and space-time cell averages of expressions.
//!
//! Polynomial integrands get a tensor Gauss–Legendre rule that is exact for
//! their per-variable degree. Anything else falls back to the midpoint rule.

use crate::expr::Expr;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
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
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A tensor rule on `[0,1]` per variable `(x, y, z, t)`, chosen for one
/// integrand.
#[derive(Clone, Debug)]
pub struct CellRule {
    nodes: [Vec<f64>; 4],
    weights: [Vec<f64>; 4],
    exact: bool,
}

impl CellRule {
    pub fn for_expr(e: &Expr) -> Self {
        match e.polynomial_degrees() {
            Some(deg) => {
                let mk = |d: u32| unit_rule(d as usize / 2 + 1);
                let r = [mk(deg[0]), mk(deg[1]), mk(deg[2]), mk(deg[3])];
                Self::from_parts(r, true)
            }
            None => Self::midpoint(),
        }
    }

    pub fn midpoint() -> Self {
        let m = || unit_rule(1);
        Self::from_parts([m(), m(), m(), m()], false)
    }

    fn from_parts(r: [(Vec<f64>, Vec<f64>); 4], exact: bool) -> Self {
        let [a, b, c, d] = r;
        Self {
            nodes: [a.0, b.0, c.0, d.0],
            weights: [a.1, b.1, c.1, d.1],
            exact,
        }
    }

    /// Whether the rule integrates the expression it was built for exactly.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// `h⁻³ ∫_{lo + [0,h)³} e(y, t) dy`.
    pub fn cell_average(&self, e: &Expr, lo: [f64; 3], h: f64, t: f64) -> f64 {
        let mut acc = 0.0;
        for (ax, wx) in self.nodes[0].iter().zip(&self.weights[0]) {
            for (ay, wy) in self.nodes[1].iter().zip(&self.weights[1]) {
                for (az, wz) in self.nodes[2].iter().zip(&self.weights[2]) {
                    let p = [lo[0] + ax * h, lo[1] + ay * h, lo[2] + az * h];
                    acc += wx * wy * wz * e.eval(p, t);
                }
            }
        }
        acc
    }

    /// `(τh³)⁻¹ ∫_{t0}^{t0+τ} ∫_{lo + [0,h)³} e(y, s) dy ds`.
    pub fn space_time_average(&self, e: &Expr, lo: [f64; 3], h: f64, t0: f64, tau: f64) -> f64 {
        self.nodes[3]
            .iter()
            .zip(&self.weights[3])
            .map(|(at, wt)| wt * self.cell_average(e, lo, h, t0 + at * tau))
            .sum()
    }
}

fn unit_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|xi| 0.5 * (xi + 1.0)).collect(),
        w.iter().map(|wi| 0.5 * wi).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials_exactly() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for d in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(d as i32)).sum();
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn polynomial_cell_average_is_exact() {
        let e = Expr::parse("x^3*y - 2*z^2 + t^2*x").unwrap();
        let rule = CellRule::for_expr(&e);
        assert!(rule.is_exact());
        let (lo, h, t0, tau): ([f64; 3], f64, f64, f64) = ([0.25, 0.5, -0.125], 0.125, 0.5, 0.25);
        // closed form of the space-time average
        let m = |a: f64, k: i32| ((a + h).powi(k + 1) - a.powi(k + 1)) / ((k + 1) as f64 * h);
        let mt = |k: i32| ((t0 + tau).powi(k + 1) - t0.powi(k + 1)) / ((k + 1) as f64 * tau);
        let exact = m(lo[0], 3) * m(lo[1], 1) - 2.0 * m(lo[2], 2) + mt(2) * m(lo[0], 1);
        let got = rule.space_time_average(&e, lo, h, t0, tau);
        assert!((got - exact).abs() < 1e-15, "{got} vs {exact}");
    }

    #[test]
    fn affine_average_is_centroid_value() {
        let e = Expr::parse("1 + 2*x - 3*y + 0.5*z").unwrap();
        let rule = CellRule::for_expr(&e);
        let lo = [0.1, 0.2, 0.3];
        let h = 0.05;
        let c = [lo[0] + h / 2.0, lo[1] + h / 2.0, lo[2] + h / 2.0];
        assert!((rule.cell_average(&e, lo, h, 0.0) - e.eval(c, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn non_polynomial_uses_midpoint() {
        let e = Expr::parse("sin(x)").unwrap();
        let rule = CellRule::for_expr(&e);
        assert!(!rule.is_exact());
        let v = rule.cell_average(&e, [0.0; 3], 0.5, 0.0);
        assert_eq!(v, 0.25f64.sin());
    }
}
