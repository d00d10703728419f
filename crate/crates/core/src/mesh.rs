//! Chebyshev–Gauss–Lobatto time mesh and Lagrange interpolation on it.
//!
//! Basis values are evaluated in barycentric form with the closed-form CGL
//! weights `w_j = (-1)^j c_j`, `c_0 = c_n = 1/2`, `c_j = 1` otherwise.

use std::f64::consts::PI;

use crate::{Error, Result, State};

/// Distance below which a point is treated as coinciding with a node.
const NODE_SNAP: f64 = 1e-14;

/// CGL nodes `t_k = cos((n-k)π/n)` on `[-1, 1]`, increasing, with steps
/// `τ_k = t_k - t_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    n: usize,
    nodes: Vec<f64>,
    steps: Vec<f64>,
    bary: Vec<f64>,
}

/// Builds the CGL mesh of degree `n >= 2`.
pub fn cgl_mesh(n: usize) -> Result<Mesh> {
    Mesh::cgl(n)
}

impl Mesh {
    pub fn cgl(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDegree(n));
        }
        Ok(Self::build(n))
    }

    /// The two-node mesh `{-1, 1}`. Only useful as a degenerate reference
    /// (e.g. for the Lebesgue constant of linear interpolation).
    pub fn linear() -> Self {
        Self::build(1)
    }

    fn build(n: usize) -> Self {
        // sin((2k-n)π/2n) == cos((n-k)π/n), but is exactly odd about k = n/2.
        let nodes: Vec<f64> = (0..=n)
            .map(|k| {
                if k == 0 {
                    -1.0
                } else if k == n {
                    1.0
                } else {
                    ((2.0 * k as f64 - n as f64) * PI / (2.0 * n as f64)).sin()
                }
            })
            .collect();
        let steps = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let bary = (0..=n)
            .map(|j| {
                let c = if j == 0 || j == n { 0.5 } else { 1.0 };
                if j % 2 == 0 {
                    c
                } else {
                    -c
                }
            })
            .collect();
        Self {
            n,
            nodes,
            steps,
            bary,
        }
    }

    /// Polynomial degree `n`; the mesh has `n + 1` nodes.
    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// All steps `τ_1, ..., τ_n`.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// `τ_k = t_k - t_{k-1}` for `k` in `1..=n`.
    pub fn step(&self, k: usize) -> f64 {
        self.steps[k - 1]
    }

    /// Values `L_{j,n}(t)` of all Lagrange fundamental polynomials at `t`.
    pub fn lagrange_basis(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        self.lagrange_basis_into(t, &mut out);
        out
    }

    /// Allocation-free variant of [`Mesh::lagrange_basis`]; `out` must hold
    /// `n + 1` entries.
    pub fn lagrange_basis_into(&self, t: f64, out: &mut [f64]) {
        assert_eq!(out.len(), self.n + 1, "basis buffer has wrong length");
        if let Some(i) = self.nodes.iter().position(|&tj| (t - tj).abs() < NODE_SNAP) {
            out.fill(0.0);
            out[i] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for ((o, &tj), &wj) in out.iter_mut().zip(&self.nodes).zip(&self.bary) {
            *o = wj / (t - tj);
            denom += *o;
        }
        for o in out.iter_mut() {
            *o /= denom;
        }
    }

    /// `P_n(t; x) = Σ_j x_j L_{j,n}(t)` for nodal state vectors `x_j`.
    pub fn interpolate(&self, values: &[State], t: f64) -> Result<State> {
        if values.len() != self.n + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.n + 1,
                found: values.len(),
            });
        }
        let dim = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let basis = self.lagrange_basis(t);
        let mut out = State::zeros(dim);
        for (l, v) in basis.iter().zip(values) {
            out.axpy(*l, v, 1.0);
        }
        Ok(out)
    }

    /// Lebesgue function maximized over `grid + 1` uniform points.
    ///
    /// This is a sampled lower bound on `Λ_n` that increases towards the true
    /// value as the grid is refined; it is a diagnostic, not a certified bound.
    pub fn lebesgue_constant(&self, grid: usize) -> Result<f64> {
        if grid < 1000 {
            return Err(Error::InvalidArgument(format!(
                "lebesgue grid must have at least 1000 intervals, got {grid}"
            )));
        }
        let mut basis = vec![0.0; self.n + 1];
        let mut best: f64 = 0.0;
        for i in 0..=grid {
            let t = -1.0 + 2.0 * i as f64 / grid as f64;
            self.lagrange_basis_into(t, &mut basis);
            best = best.max(basis.iter().map(|l| l.abs()).sum());
        }
        Ok(best)
    }
}
