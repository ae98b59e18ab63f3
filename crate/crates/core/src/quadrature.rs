//! Gauss–Legendre rules and polynomial interpolation on `[-1, 1]`.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
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
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Barycentric weights for interpolation through `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

/// Row of Lagrange basis values `l_j(x)` for interpolation through `nodes`.
pub fn lagrange_row(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    if let Some(j) = nodes.iter().position(|&xj| xj == x) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[j] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for j in 0..nodes.len() {
        let t = bary[j] / (x - nodes[j]);
        out[j] = t;
        denom += t;
    }
    out.iter_mut().for_each(|v| *v /= denom);
}

/// Interpolation matrix (row-major, `targets.len() x nodes.len()`).
pub fn interpolation_matrix(nodes: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let bary = barycentric_weights(nodes);
    let mut mat = vec![0.0; targets.len() * n];
    for (i, &t) in targets.iter().enumerate() {
        lagrange_row(nodes, &bary, t, &mut mat[i * n..(i + 1) * n]);
    }
    mat
}

/// Spectral differentiation matrix on `nodes` (row-major, square).
pub fn differentiation_matrix(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let bary = barycentric_weights(nodes);
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = bary[j] / bary[i] / (nodes[i] - nodes[j]);
                d[i * n + j] = v;
                diag -= v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..=20 {
            let gl = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let got: f64 = gl
                    .nodes
                    .iter()
                    .zip(&gl.weights)
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let gl = GaussLegendre::new(7);
        for w in gl.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in 0..7 {
            assert!((gl.nodes[i] + gl.nodes[6 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_and_differentiation_exact_for_polynomials() {
        let gl = GaussLegendre::new(6);
        let f = |x: f64| 3.0 * x.powi(5) - x.powi(2) + 0.5;
        let df = |x: f64| 15.0 * x.powi(4) - 2.0 * x;
        let vals: Vec<f64> = gl.nodes.iter().map(|&x| f(x)).collect();
        let targets = [-1.0, -0.3, 0.77, 1.0];
        let m = interpolation_matrix(&gl.nodes, &targets);
        for (i, &t) in targets.iter().enumerate() {
            let got: f64 = (0..6).map(|j| m[i * 6 + j] * vals[j]).sum();
            assert!((got - f(t)).abs() < 1e-13);
        }
        let d = differentiation_matrix(&gl.nodes);
        for i in 0..6 {
            let got: f64 = (0..6).map(|j| d[i * 6 + j] * vals[j]).sum();
            assert!((got - df(gl.nodes[i])).abs() < 1e-11);
        }
    }
}
