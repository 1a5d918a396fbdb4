//! One-dimensional Gauss rules.
//!
//! Gauss–Legendre nodes come from Newton iteration on the three-term
//! recurrence. Jacobi and general polynomial-weight rules are built by
//! Golub–Welsch from their recurrence coefficients.

use faer::{Mat, Side};
use statrs::function::gamma::ln_gamma;

/// Nodes and weights of a quadrature rule on an interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Affine map of a rule on [-1, 1] onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: self.nodes.iter().map(|&x| mid + half * x).collect(),
            weights: self.weights.iter().map(|&w| half * w).collect(),
        }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre rule with `n` points on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        weights[i] = w;
        nodes[n - 1 - i] = -x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Golub–Welsch: rule from recurrence coefficients and the weight's total mass.
fn golub_welsch(alpha: &[f64], beta: &[f64], mass: f64) -> Rule {
    let n = alpha.len();
    let jac = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[i].sqrt()
        } else if j == i + 1 {
            beta[j].sqrt()
        } else {
            0.0
        }
    });
    let evd = jac
        .self_adjoint_eigen(Side::Lower)
        .expect("tridiagonal eigensolver converges");
    let s = evd.S();
    let u = evd.U();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (s[k], mass * u[(0, k)] * u[(0, k)]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Jacobi rule for the weight (1-x)^a (1+x)^b on [-1, 1].
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Rule {
    assert!(a > -1.0 && b > -1.0, "Jacobi exponents must exceed -1");
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    for k in 0..n {
        let kf = k as f64;
        let t = 2.0 * kf + a + b;
        alpha[k] = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (t * (t + 2.0))
        };
        if k >= 1 {
            beta[k] = if k == 1 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
            } else {
                4.0 * kf * (kf + a) * (kf + b) * (kf + a + b) / (t * t * (t + 1.0) * (t - 1.0))
            };
        }
    }
    let ln_mass = (a + b + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
        - ln_gamma(a + b + 2.0);
    golub_welsch(&alpha, &beta, ln_mass.exp())
}

/// Gauss rule on [0, 1] for the weight u^(c-1), c > 0.
pub fn gauss_power_unit(n: usize, c: f64) -> Rule {
    let r = gauss_jacobi(n, 0.0, c - 1.0);
    let scale = 0.5f64.powf(c);
    Rule {
        nodes: r.nodes.iter().map(|&x| 0.5 * (x + 1.0)).collect(),
        weights: r.weights.iter().map(|&w| w * scale).collect(),
    }
}

/// Gauss rule on [a, b] for the weight r^2 (a >= 0), via discretized Stieltjes.
pub fn gauss_r2(n: usize, a: f64, b: f64) -> Rule {
    let base = gauss_legendre(n + 4).mapped(a, b);
    let xs = &base.nodes;
    let ws: Vec<f64> = base
        .weights
        .iter()
        .zip(xs)
        .map(|(&w, &x)| w * x * x)
        .collect();
    let m = xs.len();
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut p_prev = vec![0.0; m];
    let mut p = vec![1.0; m];
    let mut norm_prev = 1.0;
    let mass: f64 = ws.iter().sum();
    for k in 0..n {
        let norm: f64 = (0..m).map(|i| ws[i] * p[i] * p[i]).sum();
        let xnorm: f64 = (0..m).map(|i| ws[i] * xs[i] * p[i] * p[i]).sum();
        alpha[k] = xnorm / norm;
        if k > 0 {
            beta[k] = norm / norm_prev;
        }
        let next: Vec<f64> = (0..m)
            .map(|i| (xs[i] - alpha[k]) * p[i] - if k > 0 { beta[k] * p_prev[i] } else { 0.0 })
            .collect();
        p_prev = std::mem::replace(&mut p, next);
        norm_prev = norm;
    }
    golub_welsch(&alpha, &beta, mass)
}

/// Panels on [a, b] graded geometrically toward a point `p` with finest size `eps`.
///
/// `p` may lie inside or outside the interval. Returned breakpoints are sorted
/// and include both endpoints.
pub fn graded_breaks(a: f64, b: f64, p: f64, eps: f64, ratio: f64) -> Vec<f64> {
    debug_assert!(b > a && eps > 0.0 && ratio > 1.0);
    let mut out = vec![a, b];
    let span = (b - p).abs().max((a - p).abs());
    for dir in [1.0, -1.0] {
        let mut t = eps;
        while t < span {
            let x = p + dir * t;
            if x > a && x < b {
                out.push(x);
            }
            t *= ratio;
        }
    }
    if p > a && p < b {
        out.push(p);
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in 1..40 {
            let r = gauss_legendre(n);
            for k in 0..(2 * n) {
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                let got = r.integrate(|x| x.powi(k as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} k={k} got={got}");
            }
        }
    }

    #[test]
    fn legendre_nodes_sorted_and_interior() {
        let r = gauss_legendre(64);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(r.nodes[0] > -1.0 && r.nodes[63] < 1.0);
    }

    #[test]
    fn jacobi_moments() {
        // int_0^1 u^(c-1) u^k du = 1/(c+k)
        for &c in &[0.1, 0.5, 0.75, 1.0, 1.5] {
            let r = gauss_power_unit(20, c);
            for k in 0..30 {
                let got = r.integrate(|u| u.powi(k));
                let exact = 1.0 / (c + k as f64);
                assert!((got / exact - 1.0).abs() < 1e-12, "c={c} k={k}");
            }
        }
    }

    #[test]
    fn r2_rule_exact_to_degree() {
        let r = gauss_r2(3, 0.25, 0.5);
        for k in 0..6 {
            let kf = k as f64;
            let exact = (0.5f64.powf(kf + 3.0) - 0.25f64.powf(kf + 3.0)) / (kf + 3.0);
            let got = r.integrate(|x| x.powi(k));
            assert!((got / exact - 1.0).abs() < 1e-13, "k={k}");
        }
        assert!(r.nodes.iter().all(|&x| x > 0.25 && x < 0.5));
    }

    #[test]
    fn graded_breaks_cover_interval() {
        let br = graded_breaks(0.0, 1.0, 0.3, 1e-4, 2.0);
        assert_eq!(br[0], 0.0);
        assert_eq!(*br.last().unwrap(), 1.0);
        assert!(br.contains(&0.3));
        assert!(br.windows(2).all(|w| w[0] < w[1]));
        let outside = graded_breaks(0.5, 1.0, 0.4, 1e-3, 2.0);
        assert!(outside.windows(2).all(|w| w[0] < w[1]));
        assert!(outside[1] - 0.5 < 0.1 + 1e-12);
    }
}
