//! Assembly and solution of the discrete nonlocal system
//!
//! ```text
//! x_0 + α x_n = φ,
//! x_k = σ_k x_{k-1} + Σ_j α_{kj} x_j + φ_k,   k = 1..=n,
//! ```
//!
//! written as `S x = B x + Φ` with `S` block-bidiagonal plus the corner
//! entry `α` in row 0, `B` the `α_{kj}` blocks (row 0 identically zero), and
//! `Φ = (φ, φ_1, ..., φ_n)`. `S^{-1}` is applied matrix-free by forward
//! substitution and one solve with the corner factor `I + α σ_n···σ_1`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::coefficients::{default_quad_order, AlphaPath, Block, CoefficientSet};
use crate::mesh::Mesh;
use crate::operator::NonlocalProblem;
use crate::{max_block_norm, Error, Result, State};

/// Smallest admissible singular value of the corner factor.
const CORNER_TOL: f64 = 1e-12;

/// Upper bound on `(n + 1) · dim` for [`direct_solve`].
pub const DIRECT_SOLVE_LIMIT: usize = 100_000;

/// Power-iteration steps used to estimate the contraction factor, and how
/// many leading steps are discarded as transient.
const PROBE_STEPS: usize = 64;
const PROBE_SKIP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FixedPoint,
    Direct,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fixed-point" => Ok(Method::FixedPoint),
            "direct" => Ok(Method::Direct),
            other => Err(format!(
                "unknown method '{other}' (expected fixed-point or direct)"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::FixedPoint => "fixed-point",
            Method::Direct => "direct",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss–Legendre points per subinterval; `None` means
    /// [`default_quad_order`].
    pub quad_order: Option<usize>,
    pub alpha_path: AlphaPath,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: Method::FixedPoint,
            tol: 1e-13,
            max_iter: 200,
            quad_order: None,
            alpha_path: AlphaPath::Auto,
        }
    }
}

enum CornerSolver {
    /// Reciprocals of `1 + α P_m` per mode.
    Diagonal(DVector<f64>),
    Dense(LU<f64, Dyn, Dyn>),
}

/// The assembled system for one problem and mesh. Immutable once built.
pub struct DiscreteSystem {
    mesh: Mesh,
    coeffs: CoefficientSet,
    alpha: f64,
    phi: State,
    dim: usize,
    diagonal: bool,
    /// `σ_n ··· σ_1`.
    product: Block,
    corner: CornerSolver,
    warnings: Vec<String>,
}

impl std::fmt::Debug for DiscreteSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteSystem")
            .field("n", &self.mesh.degree())
            .field("dim", &self.dim)
            .field("alpha", &self.alpha)
            .field("warnings", &self.warnings)
            .finish()
    }
}

/// Builds the discrete system for `problem` on the degree-`n` CGL mesh.
pub fn assemble(problem: &NonlocalProblem, n: usize, quad_order: usize) -> Result<DiscreteSystem> {
    DiscreteSystem::assemble(problem, n, quad_order, AlphaPath::Auto)
}

impl DiscreteSystem {
    pub fn assemble(
        problem: &NonlocalProblem,
        n: usize,
        quad_order: usize,
        alpha_path: AlphaPath,
    ) -> Result<Self> {
        let mesh = Mesh::cgl(n)?;
        let mut warnings = Vec::new();
        let margin = problem.wellposedness_margin()?;
        if margin <= 0.0 {
            warnings.push(format!(
                "well-posedness margin 1 - |alpha| e^(-2 omega) = {margin:.3e} is not positive; invertibility is not guaranteed"
            ));
        }
        if !problem.smooth_forcing {
            warnings.push(
                "forcing declared non-smooth: quadrature accuracy of phi_k is degraded".into(),
            );
        }
        let forcing = |t: f64| problem.forcing(t);
        let coeffs =
            CoefficientSet::compute(&mesh, &problem.family, &forcing, quad_order, alpha_path)?;
        warnings.extend(coeffs.warnings.iter().cloned());
        Self::from_parts(mesh, coeffs, problem.alpha, problem.phi.clone(), warnings)
    }

    /// Wraps precomputed coefficients.
    pub fn from_parts(
        mesh: Mesh,
        coeffs: CoefficientSet,
        alpha: f64,
        phi: State,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let n = mesh.degree();
        if coeffs.sigma.len() != n || coeffs.alpha.len() != n || coeffs.phi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: coeffs.sigma.len(),
            });
        }
        let dim = phi.len();
        let diagonal = matches!(coeffs.sigma[0], Block::Diagonal(_));
        let mut product = coeffs.sigma[0].clone();
        for s in &coeffs.sigma[1..] {
            product = s.compose(&product);
        }
        let corner = match &product {
            Block::Diagonal(p) => {
                let factor = p.map(|pm| 1.0 + alpha * pm);
                let smallest = factor.iter().fold(f64::INFINITY, |a, f| a.min(f.abs()));
                if smallest <= CORNER_TOL {
                    return Err(Error::SingularCorner(smallest));
                }
                CornerSolver::Diagonal(factor.map(|f| 1.0 / f))
            }
            Block::Dense(p) => {
                let factor = DMatrix::identity(dim, dim) + p * alpha;
                let smallest = factor.clone().singular_values().min();
                if smallest <= CORNER_TOL {
                    return Err(Error::SingularCorner(smallest));
                }
                CornerSolver::Dense(factor.lu())
            }
        };
        Ok(Self {
            mesh,
            coeffs,
            alpha,
            phi,
            dim,
            diagonal,
            product,
            corner,
            warnings,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `σ_n ··· σ_1`.
    pub fn corner_product(&self) -> &Block {
        &self.product
    }

    /// `Φ = (φ, φ_1, ..., φ_n)`.
    pub fn phi_vector(&self) -> Vec<State> {
        std::iter::once(self.phi.clone())
            .chain(self.coeffs.phi.iter().cloned())
            .collect()
    }

    fn check_blocks(&self, v: &[State]) -> Result<()> {
        let n = self.mesh.degree();
        if v.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: v.len(),
            });
        }
        if let Some(bad) = v.iter().find(|b| b.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: bad.len(),
            });
        }
        Ok(())
    }

    /// `S x`: row 0 is `x_0 + α x_n`, row `k` is `x_k - σ_k x_{k-1}`.
    pub fn apply_s(&self, x: &[State]) -> Result<Vec<State>> {
        self.check_blocks(x)?;
        let n = self.mesh.degree();
        let mut out = Vec::with_capacity(n + 1);
        out.push(&x[0] + &x[n] * self.alpha);
        for k in 1..=n {
            out.push(&x[k] - self.coeffs.sigma[k - 1].apply(&x[k - 1]));
        }
        Ok(out)
    }

    /// Solves `S x = rhs`.
    ///
    /// With `w` the forward sweep of `rhs_1..rhs_n` from zero,
    /// `x_n = P x_0 + w` where `P = σ_n···σ_1`; eliminating
    /// `x_0 = rhs_0 - α x_n` gives `(I + αP) x_n = P rhs_0 + w`.
    pub fn apply_s_inverse(&self, rhs: &[State]) -> Result<Vec<State>> {
        self.check_blocks(rhs)?;
        let n = self.mesh.degree();
        let mut w = State::zeros(self.dim);
        for k in 1..=n {
            w = self.coeffs.sigma[k - 1].apply(&w) + &rhs[k];
        }
        let corner_rhs = self.product.apply(&rhs[0]) + w;
        let xn = match &self.corner {
            CornerSolver::Diagonal(inv) => inv.component_mul(&corner_rhs),
            CornerSolver::Dense(lu) => lu.solve(&corner_rhs).ok_or(Error::SingularCorner(0.0))?,
        };
        let mut x = Vec::with_capacity(n + 1);
        x.push(&rhs[0] - &xn * self.alpha);
        for k in 1..=n {
            let next = self.coeffs.sigma[k - 1].apply(&x[k - 1]) + &rhs[k];
            x.push(next);
        }
        Ok(x)
    }

    /// `B x`: row 0 is zero, row `k` is `Σ_j α_{kj} x_j`.
    pub fn apply_b(&self, x: &[State]) -> Result<Vec<State>> {
        self.check_blocks(x)?;
        let mut out = Vec::with_capacity(x.len());
        out.push(State::zeros(self.dim));
        for row in &self.coeffs.alpha {
            let mut acc = State::zeros(self.dim);
            for (block, xj) in row.iter().zip(x) {
                block.apply_add(xj, &mut acc);
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `max_k ‖(S x - B x - Φ)_k‖_∞`.
    pub fn residual(&self, x: &[State]) -> Result<f64> {
        let sx = self.apply_s(x)?;
        let bx = self.apply_b(x)?;
        let phi = self.phi_vector();
        let r: Vec<State> = sx
            .iter()
            .zip(&bx)
            .zip(&phi)
            .map(|((s, b), p)| s - b - p)
            .collect();
        Ok(max_block_norm(&r))
    }

    /// One application of the fixed-point map `x ↦ S^{-1}(B x + Φ)`.
    fn fixed_point_step(&self, x: &[State], phi: &[State]) -> Result<Vec<State>> {
        let mut bx = self.apply_b(x)?;
        for (b, p) in bx.iter_mut().zip(phi) {
            *b += p;
        }
        self.apply_s_inverse(&bx)
    }

    /// Estimates the spectral radius of `S^{-1}B` by normalized power
    /// iteration from `start`, averaging the log growth after a short
    /// transient.
    pub fn contraction_estimate(&self, start: &[State]) -> Result<f64> {
        let mut d: Vec<State> = start.to_vec();
        let norm = max_block_norm(&d);
        if norm == 0.0 {
            d = self.apply_s_inverse(&self.apply_b(&self.phi_vector())?)?;
        }
        let norm = max_block_norm(&d);
        if norm == 0.0 || !norm.is_finite() {
            return Ok(0.0);
        }
        d.iter_mut().for_each(|b| *b /= norm);
        let mut log_sum = 0.0;
        let mut counted = 0;
        for step in 0..PROBE_STEPS {
            d = self.apply_s_inverse(&self.apply_b(&d)?)?;
            let g = max_block_norm(&d);
            if g == 0.0 {
                return Ok(0.0);
            }
            if !g.is_finite() {
                return Ok(f64::INFINITY);
            }
            d.iter_mut().for_each(|b| *b /= g);
            if step >= PROBE_SKIP {
                log_sum += g.ln();
                counted += 1;
            }
        }
        Ok((log_sum / counted as f64).exp())
    }
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub mesh: Mesh,
    pub method: Method,
    /// `x_0, ..., x_n` at the CGL nodes.
    pub nodal_values: Vec<State>,
    /// Fixed-point iterations performed (0 for the direct method).
    pub iterations: usize,
    /// Max-block-norm increments `‖x^{(k+1)} - x^{(k)}‖`, one per iteration.
    pub increments: Vec<f64>,
    /// Empirical contraction factor of `x ↦ S^{-1}(Bx + Φ)`.
    pub contraction_q: f64,
    /// `‖S x - B x - Φ‖` in the max-block norm.
    pub residual: f64,
    /// `‖x_k - v(t_k)‖_∞` when an exact solution was supplied.
    pub errors_at_nodes: Option<Vec<f64>>,
    pub warnings: Vec<String>,
    pub elapsed_seconds: f64,
}

impl SolveReport {
    /// Interpolated solution `P_n(t; x)` at any `t ∈ [-1, 1]`.
    pub fn value_at(&self, t: f64) -> Result<State> {
        self.mesh.interpolate(&self.nodal_values, t)
    }

    pub fn max_nodal_error(&self) -> Option<f64> {
        self.errors_at_nodes
            .as_ref()
            .map(|e| e.iter().copied().fold(0.0, f64::max))
    }
}

/// Fixed-point iteration `x ← S^{-1}(B x + Φ)` from `x⁽⁰⁾ = S^{-1}Φ`,
/// stopped when the max-block increment drops to `tol`.
pub fn fixed_point_solve(
    system: &DiscreteSystem,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let started = Instant::now();
    let phi = system.phi_vector();
    let mut x = system.apply_s_inverse(&phi)?;
    let mut increments = Vec::new();
    let mut last_diff: Vec<State> = Vec::new();
    let mut converged = false;
    while increments.len() < max_iter {
        let next = system.fixed_point_step(&x, &phi)?;
        last_diff = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let inc = max_block_norm(&last_diff);
        x = next;
        increments.push(inc);
        if !inc.is_finite() {
            break;
        }
        if inc <= tol {
            converged = true;
            break;
        }
    }
    let mut warnings = system.warnings.clone();
    let tail_q = tail_ratio(&increments);
    if !converged {
        let last = increments.last().copied().unwrap_or(f64::INFINITY);
        if tail_q >= 1.0 || !last.is_finite() {
            return Err(Error::Divergence {
                iterations: increments.len(),
                q: tail_q,
            });
        }
        return Err(Error::NotConverged {
            iterations: increments.len(),
            increment: last,
        });
    }
    let contraction_q = system.contraction_estimate(&last_diff)?;
    if contraction_q >= 1.0 {
        warnings.push(format!(
            "contraction estimate {contraction_q:.3e} >= 1 although the increments decreased"
        ));
    }
    let residual = system.residual(&x)?;
    Ok(SolveReport {
        mesh: system.mesh.clone(),
        method: Method::FixedPoint,
        nodal_values: x,
        iterations: increments.len(),
        increments,
        contraction_q,
        residual,
        errors_at_nodes: None,
        warnings,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Geometric mean of the last (up to) three increment ratios.
fn tail_ratio(increments: &[f64]) -> f64 {
    let ratios: Vec<f64> = increments
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let tail = &ratios[ratios.len().saturating_sub(3)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().product::<f64>().powf(1.0 / tail.len() as f64)
}

/// Solves `(S - B) x = Φ` by dense LU with partial pivoting.
///
/// Diagonal families decouple by mode, so each mode is solved as its own
/// `(n + 1) × (n + 1)` system; dense families build the full block matrix.
pub fn direct_solve(system: &DiscreteSystem) -> Result<Vec<State>> {
    let n = system.mesh.degree();
    let dim = system.dim;
    let total = (n + 1) * dim;
    if total > DIRECT_SOLVE_LIMIT {
        return Err(Error::TooLarge(total));
    }
    let phi = system.phi_vector();
    let sigma = &system.coeffs.sigma;
    let alpha = &system.coeffs.alpha;
    let mut x = vec![State::zeros(dim); n + 1];
    if system.diagonal {
        let entry = |b: &Block, m: usize| match b {
            Block::Diagonal(d) => d[m],
            Block::Dense(mat) => mat[(m, m)],
        };
        for m in 0..dim {
            let mut a = DMatrix::zeros(n + 1, n + 1);
            a[(0, 0)] = 1.0;
            a[(0, n)] += system.alpha;
            for k in 1..=n {
                a[(k, k)] += 1.0;
                a[(k, k - 1)] -= entry(&sigma[k - 1], m);
                for j in 0..=n {
                    a[(k, j)] -= entry(&alpha[k - 1][j], m);
                }
            }
            let b = DVector::from_iterator(n + 1, phi.iter().map(|p| p[m]));
            let sol = solve_dense(a, b)?;
            for k in 0..=n {
                x[k][m] = sol[k];
            }
        }
    } else {
        let mut a = DMatrix::zeros(total, total);
        let eye = DMatrix::<f64>::identity(dim, dim);
        let mut put = |r: usize, c: usize, blk: &DMatrix<f64>, scale: f64| {
            let mut view = a.view_mut((r * dim, c * dim), (dim, dim));
            view += blk * scale;
        };
        put(0, 0, &eye, 1.0);
        put(0, n, &eye, system.alpha);
        for k in 1..=n {
            put(k, k, &eye, 1.0);
            put(k, k - 1, &sigma[k - 1].to_dense(), -1.0);
            for j in 0..=n {
                put(k, j, &alpha[k - 1][j].to_dense(), -1.0);
            }
        }
        let b = DVector::from_iterator(total, phi.iter().flat_map(|p| p.iter().copied()));
        let sol = solve_dense(a, b)?;
        for k in 0..=n {
            x[k].copy_from(&sol.rows(k * dim, dim));
        }
    }
    Ok(x)
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.amax();
    let lu = a.lu();
    let u_min = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if !(u_min > 1e-14 * scale) {
        return Err(Error::SingularMatrix);
    }
    lu.solve(&b).ok_or(Error::SingularMatrix)
}

/// Assembles and solves with default quadrature, then measures nodal errors
/// against the problem's exact solution when one is attached.
pub fn solve_nonlocal(
    problem: &NonlocalProblem,
    n: usize,
    method: Method,
    tol: f64,
) -> Result<SolveReport> {
    let opts = SolveOptions {
        method,
        tol,
        ..SolveOptions::default()
    };
    solve_nonlocal_with(problem, n, &opts)
}

pub fn solve_nonlocal_with(
    problem: &NonlocalProblem,
    n: usize,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let started = Instant::now();
    let quad_order = opts.quad_order.unwrap_or_else(|| default_quad_order(n));
    let system = DiscreteSystem::assemble(problem, n, quad_order, opts.alpha_path)?;
    let mut report = match opts.method {
        Method::FixedPoint => fixed_point_solve(&system, opts.tol, opts.max_iter)?,
        Method::Direct => {
            let x = direct_solve(&system)?;
            let probe = system.apply_s_inverse(&system.apply_b(&x)?)?;
            SolveReport {
                mesh: system.mesh.clone(),
                method: Method::Direct,
                contraction_q: system.contraction_estimate(&probe)?,
                residual: system.residual(&x)?,
                nodal_values: x,
                iterations: 0,
                increments: Vec::new(),
                errors_at_nodes: None,
                warnings: system.warnings.clone(),
                elapsed_seconds: 0.0,
            }
        }
    };
    if let Some(exact) = &problem.exact {
        report.errors_at_nodes = Some(
            report
                .mesh
                .nodes()
                .iter()
                .zip(&report.nodal_values)
                .map(|(&t, x)| (x - exact(t)).amax())
                .collect(),
        );
    }
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DenseFamily, DiagonalFamily};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_problem(lambda: f64, alpha: f64) -> NonlocalProblem {
        NonlocalProblem::new(
            DiagonalFamily::constant(vec![lambda]),
            |_| State::zeros(1),
            alpha,
            State::from_element(1, 1.0),
        )
        .unwrap()
    }

    fn scalars(x: &[State]) -> Vec<f64> {
        x.iter().map(|v| v[0]).collect()
    }

    #[test]
    fn constant_family_has_zero_b() {
        let sys = assemble(&scalar_problem(1.0, 0.5), 5, 32).unwrap();
        let x: Vec<State> = (0..6)
            .map(|i| State::from_element(1, i as f64 + 0.5))
            .collect();
        let bx = sys.apply_b(&x).unwrap();
        assert!(bx.iter().all(|b| b[0] == 0.0));
    }

    #[test]
    fn heat_sigma_blocks_are_propagated() {
        let p = NonlocalProblem::heat_example();
        let sys = assemble(&p, 4, 32).unwrap();
        let direct = crate::compute_sigma(sys.mesh(), &p.family).unwrap();
        assert_eq!(sys.coefficients().sigma, direct);
    }

    #[test]
    fn singular_corner_is_detected() {
        let lambda: f64 = 1.3;
        let p = scalar_problem(lambda, -(2.0 * lambda).exp());
        assert!(matches!(assemble(&p, 4, 32), Err(Error::SingularCorner(_))));
    }

    #[test]
    fn s_inverse_examples() {
        let rhs = vec![
            State::from_element(1, 1.0),
            State::zeros(1),
            State::zeros(1),
        ];
        let sys = assemble(&scalar_problem(1.0, 0.0), 2, 32).unwrap();
        let x = scalars(&sys.apply_s_inverse(&rhs).unwrap());
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[2], (-2.0f64).exp(), epsilon = 1e-15);

        let sys = assemble(&scalar_problem(1.0, 0.5), 2, 32).unwrap();
        let x = scalars(&sys.apply_s_inverse(&rhs).unwrap());
        let e2 = (-2.0f64).exp();
        let x2 = e2 / (1.0 + 0.5 * e2);
        assert_abs_diff_eq!(x[2], x2, epsilon = 1e-15);
        assert_abs_diff_eq!(x[0], 1.0 - 0.5 * x2, epsilon = 1e-15);
        assert_abs_diff_eq!(x[0], 0.936621, epsilon = 5e-7);
        assert_abs_diff_eq!(x[1], 0.344564, epsilon = 5e-7);
        assert_abs_diff_eq!(x[2], 0.126758, epsilon = 5e-7);
    }

    #[test]
    fn s_inverse_multiply_back_heat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = NonlocalProblem::heat_example();
        let sys = assemble(&p, 8, 32).unwrap();
        for _ in 0..10 {
            let rhs: Vec<State> = (0..9)
                .map(|_| State::from_element(1, rng.random_range(-1.0..1.0)))
                .collect();
            let x = sys.apply_s_inverse(&rhs).unwrap();
            let back = sys.apply_s(&x).unwrap();
            let err = back
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max);
            assert!(err <= 1e-12);
        }
    }

    #[test]
    fn s_inverse_multiply_back_dense_non_commuting() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a0 = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 });
        let a1 = DMatrix::from_fn(3, 3, |i, j| {
            if i < j {
                0.4
            } else if i == j {
                0.2
            } else {
                -0.1
            }
        });
        let fam = DenseFamily::new(3, false, move |t| &a0 + &a1 * t);
        let p = NonlocalProblem::new(
            fam,
            |t| State::from_element(3, t.cos()),
            -0.7,
            State::from_element(3, 1.0),
        )
        .unwrap();
        let sys = assemble(&p, 6, 32).unwrap();
        let rhs: Vec<State> = (0..7)
            .map(|_| State::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let x = sys.apply_s_inverse(&rhs).unwrap();
        let back = sys.apply_s(&x).unwrap();
        let err = back
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12);
        let fp = fixed_point_solve(&sys, 1e-14, 100).unwrap();
        let dx = direct_solve(&sys).unwrap();
        let diff = fp
            .nodal_values
            .iter()
            .zip(&dx)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-11);
    }

    #[test]
    fn b_has_zero_first_row_and_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = NonlocalProblem::heat_example();
        let sys = assemble(&p, 6, 32).unwrap();
        let rand_vec = |rng: &mut ChaCha8Rng| -> Vec<State> {
            (0..7)
                .map(|_| State::from_element(1, rng.random_range(-1.0..1.0)))
                .collect()
        };
        let x = rand_vec(&mut rng);
        let y = rand_vec(&mut rng);
        let sum: Vec<State> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let (bx, by, bs) = (
            sys.apply_b(&x).unwrap(),
            sys.apply_b(&y).unwrap(),
            sys.apply_b(&sum).unwrap(),
        );
        assert_eq!(bx[0][0], 0.0);
        for k in 0..7 {
            assert!((&bs[k] - &bx[k] - &by[k]).amax() <= 1e-13);
        }
        assert!(sys.apply_b(&x[..3]).is_err());
    }

    #[test]
    fn constant_family_converges_in_one_iteration() {
        let sys = assemble(&scalar_problem(2.0, 0.5), 6, 32).unwrap();
        let r = fixed_point_solve(&sys, 1e-13, 50).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.contraction_q, 0.0);
        let direct = direct_solve(&sys).unwrap();
        let via_s = sys.apply_s_inverse(&sys.phi_vector()).unwrap();
        for (a, b) in direct.iter().zip(&via_s) {
            assert!((a - b).amax() <= 1e-14);
        }
    }

    #[test]
    fn closed_form_scalar_nonlocal() {
        for n in [2, 5, 9] {
            let sys = assemble(&scalar_problem(1.0, 0.5), n, 32).unwrap();
            let x = direct_solve(&sys).unwrap();
            let vn = (-2.0f64).exp() / (1.0 + 0.5 * (-2.0f64).exp());
            assert_abs_diff_eq!(x[n][0], vn, epsilon = 1e-14);
            assert_abs_diff_eq!(
                x[0][0],
                1.0 / (1.0 + 0.5 * (-2.0f64).exp()),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn heat_fixed_point_matches_direct() {
        let p = NonlocalProblem::heat_example();
        for n in [4, 8] {
            let sys = assemble(&p, n, default_quad_order(n)).unwrap();
            let fp = fixed_point_solve(&sys, 1e-13, 100).unwrap();
            let dx = direct_solve(&sys).unwrap();
            for (a, b) in fp.nodal_values.iter().zip(&dx) {
                assert!((a - b).amax() <= 1e-12);
            }
            assert!(fp.residual <= 1e-12);
            assert!(fp.contraction_q > 0.0 && fp.contraction_q < 1.0);
        }
    }

    #[test]
    fn contraction_decreases_with_n() {
        let p = NonlocalProblem::heat_example();
        let q = |n| {
            solve_nonlocal(&p, n, Method::FixedPoint, 1e-13)
                .unwrap()
                .contraction_q
        };
        assert!(q(16) < q(8));
    }

    #[test]
    fn nonlocal_condition_holds_exactly() {
        let p = NonlocalProblem::heat_example();
        for method in [Method::FixedPoint, Method::Direct] {
            let r = solve_nonlocal(&p, 8, method, 1e-13).unwrap();
            let x = &r.nodal_values;
            let defect = (&x[0] + &x[8] * p.alpha - &p.phi).amax();
            assert!(defect <= 1e-13, "{method}: {defect:e}");
        }
    }

    #[test]
    fn fixed_point_argument_errors() {
        let sys = assemble(&scalar_problem(1.0, 0.5), 3, 32).unwrap();
        assert!(fixed_point_solve(&sys, 0.0, 10).is_err());
        assert!(fixed_point_solve(&sys, 1e-10, 0).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        // A rate that falls steeply inside each step is badly frozen at the
        // right endpoint, which makes S^{-1}B expansive on a coarse mesh.
        let fam =
            DiagonalFamily::new(1, |_, t| 1.0 + 50.0 * (1.0 - t).powi(2)).with_polynomial_degree(2);
        let p = NonlocalProblem::new(
            fam,
            |_| State::from_element(1, 1.0),
            0.5,
            State::from_element(1, 1.0),
        )
        .unwrap();
        let sys = assemble(&p, 2, 32).unwrap();
        let q = sys.contraction_estimate(&sys.phi_vector()).unwrap();
        assert!(q > 1.0, "q = {q}");
        assert!(matches!(
            fixed_point_solve(&sys, 1e-13, 40),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn direct_solve_rejects_huge_systems() {
        let fam = DiagonalFamily::constant(vec![1.0; 25_000]);
        let p =
            NonlocalProblem::new(fam, |_| State::zeros(25_000), 0.0, State::zeros(25_000)).unwrap();
        let sys = assemble(&p, 4, 8).unwrap();
        assert_eq!(direct_solve(&sys), Err(Error::TooLarge(125_000)));
    }

    #[test]
    fn report_interpolates_between_nodes() {
        let p = NonlocalProblem::heat_example();
        let r = solve_nonlocal(&p, 16, Method::FixedPoint, 1e-13).unwrap();
        let v = r.value_at(0.3).unwrap()[0];
        // Degree-16 interpolation of e^{-π²(1+t)} is accurate to about 1e-6.
        assert!((v - (-std::f64::consts::PI.powi(2) * 1.3).exp()).abs() < 2e-6);
        assert_eq!(r.errors_at_nodes.as_ref().unwrap().len(), 17);
    }

    #[test]
    fn method_parses() {
        assert_eq!("direct".parse::<Method>(), Ok(Method::Direct));
        assert_eq!("fixed-point".parse::<Method>(), Ok(Method::FixedPoint));
        assert!("newton".parse::<Method>().is_err());
    }
}
