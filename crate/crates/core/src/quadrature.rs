//! Gauss–Legendre quadrature.

use std::f64::consts::PI;

/// An `order`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on the Legendre recurrence, starting from
    /// Tricomi's asymptotic guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be at least 1");
        let n = order;
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let theta = PI * (i as f64 + 0.75) / (nf + 0.5);
            let mut z = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(z), P_n'(z))`.
fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * z * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_interval_length() {
        for order in [1, 2, 5, 10, 32, 81, 160] {
            let g = GaussLegendre::new(order);
            assert_relative_eq!(g.weights().iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_for_polynomials_of_degree_2n_minus_1() {
        let g = GaussLegendre::new(7);
        for p in 0..=13 {
            let got = g.integrate(0.0, 1.0, |x| x.powi(p));
            assert_relative_eq!(got, 1.0 / (p as f64 + 1.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn integrates_smooth_function() {
        let g = GaussLegendre::new(100);
        let got = g.integrate(0.0, 10.0, |x| x * (-x).exp());
        assert_relative_eq!(got, 1.0 - 11.0 * (-10.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn two_point_rule() {
        let g = GaussLegendre::new(2);
        assert_relative_eq!(g.nodes()[1], 1.0 / 3.0f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(g.weights()[0], 1.0, epsilon = 1e-15);
    }
}
