//! Coefficients of the discrete nonlocal system.
//!
//! For `k = 1..=n` and `j = 0..=n`:
//!
//! ```text
//! σ_k    = e^{-A_k τ_k}
//! α_{kj} = ∫_{t_{k-1}}^{t_k} e^{-A_k (t_k - s)} [A_k - A(s)] L_{j,n}(s) ds
//! φ_k    = ∫_{t_{k-1}}^{t_k} e^{-A_k (t_k - s)} f(s) ds
//! ```
//!
//! with `A_k = A(t_k)`. The integrals use Gauss–Legendre rules mapped to each
//! subinterval. For diagonal families whose eigenvalues are declared
//! polynomial in `t`, `α_{kj}` can also be computed exactly from the
//! exponential moments `μ_p = ∫_0^τ u^p e^{-λu} du`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::mesh::Mesh;
use crate::operator::{DenseExp, OperatorFamily};
use crate::quadrature::GaussLegendre;
use crate::{Error, Result, State};

pub use crate::operator::Block;

/// Below this value of `λτ` the moments come from the alternating Taylor series.
pub const SERIES_CROSSOVER: f64 = 1e-3;

/// Largest polynomial degree accepted by the exact moment path.
pub const MAX_EXACT_DEGREE: usize = 8;

const MAX_MOMENT: usize = 64;

/// Default per-subinterval Gauss–Legendre order, `max(2n + 16, 32)`.
pub fn default_quad_order(n: usize) -> usize {
    (2 * n + 16).max(32)
}

/// Exponential moments `μ_p = ∫_0^τ u^p e^{-λu} du`, `p = 0..=p_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpMoments {
    pub lambda: f64,
    pub tau: f64,
    pub mu: Vec<f64>,
}

/// Computes `μ_0 ..= μ_{p_max}`.
///
/// - `λ = 0`: `τ^{p+1}/(p+1)`.
/// - `λτ < 1e-3`: `τ^{p+1} Σ_i (-λτ)^i / (i! (p+1+i))`.
/// - otherwise `μ_0 = (1 - e^{-λτ})/λ` and the upward recurrence
///   `μ_p = (p μ_{p-1} - τ^p e^{-λτ})/λ` while `p <= λτ`; past that the
///   recurrence amplifies rounding by `p/(λτ)` per step, so the remaining
///   moments use the positive series
///   `τ^{p+1} e^{-λτ} Σ_i (λτ)^i / ((p+1)(p+2)···(p+1+i))`.
pub fn exp_moments(lambda: f64, tau: f64, p_max: usize) -> Result<ExpMoments> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "moment rate must be >= 0, got {lambda}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "moment length must be > 0, got {tau}"
        )));
    }
    if p_max > MAX_MOMENT {
        return Err(Error::InvalidArgument(format!(
            "moment order {p_max} exceeds {MAX_MOMENT}"
        )));
    }
    let x = lambda * tau;
    let mu = if lambda == 0.0 {
        (0..=p_max)
            .map(|p| tau.powi(p as i32 + 1) / (p as f64 + 1.0))
            .collect()
    } else if x < SERIES_CROSSOVER {
        small_rate_moments(lambda, tau, p_max)
    } else {
        standard_moments(lambda, tau, p_max)
    };
    Ok(ExpMoments { lambda, tau, mu })
}

fn small_rate_moments(lambda: f64, tau: f64, p_max: usize) -> Vec<f64> {
    let x = lambda * tau;
    (0..=p_max)
        .map(|p| {
            let a = p as f64 + 1.0;
            let mut coef = 1.0; // (-x)^i / i!
            let mut sum = 0.0;
            for i in 0..60 {
                let term = coef / (a + i as f64);
                sum += term;
                if term.abs() <= 1e-17 * sum.abs() {
                    break;
                }
                coef *= -x / (i as f64 + 1.0);
            }
            tau.powi(p as i32 + 1) * sum
        })
        .collect()
}

fn standard_moments(lambda: f64, tau: f64, p_max: usize) -> Vec<f64> {
    let x = lambda * tau;
    let decay = (-x).exp();
    let mut mu = Vec::with_capacity(p_max + 1);
    mu.push(-(-x).exp_m1() / lambda);
    for p in 1..=p_max {
        let pf = p as f64;
        let next = if pf <= x {
            (pf * mu[p - 1] - tau.powi(p as i32) * decay) / lambda
        } else {
            let mut term = 1.0 / (pf + 1.0);
            let mut sum = term;
            for i in 1..2000 {
                term *= x / (pf + 1.0 + i as f64);
                sum += term;
                if term <= 1e-17 * sum {
                    break;
                }
            }
            tau.powi(p as i32 + 1) * decay * sum
        };
        mu.push(next);
    }
    mu
}

/// How `α_{kj}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPath {
    /// Exact moments when the family declares polynomial eigenvalues,
    /// quadrature otherwise.
    Auto,
    Quadrature,
    ExactMoments,
    /// Both paths; fails with [`Error::QuadratureMismatch`] if they differ
    /// by more than `tol` in any entry.
    Both {
        tol: f64,
    },
}

/// `σ_k`, `α_{kj}` and `φ_k` for one mesh and problem.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    /// `σ_1 ..= σ_n` (index `k - 1`).
    pub sigma: Vec<Block>,
    /// `alpha[k - 1][j]` is `α_{kj}`.
    pub alpha: Vec<Vec<Block>>,
    /// `φ_1 ..= φ_n` (index `k - 1`).
    pub phi: Vec<State>,
    pub warnings: Vec<String>,
}

impl CoefficientSet {
    pub fn compute(
        mesh: &Mesh,
        family: &OperatorFamily,
        forcing: &dyn Fn(f64) -> State,
        quad_order: usize,
        path: AlphaPath,
    ) -> Result<Self> {
        let sigma = compute_sigma(mesh, family)?;
        let alpha = compute_alpha(mesh, family, quad_order, path)?;
        let (phi, warning) = compute_phi(mesh, family, forcing, quad_order)?;
        Ok(Self {
            sigma,
            alpha,
            phi,
            warnings: warning.into_iter().collect(),
        })
    }
}

/// `σ_k = e^{-A(t_k) τ_k}` for `k = 1..=n`. (`σ_0 = I` is implicit.)
pub fn compute_sigma(mesh: &Mesh, family: &OperatorFamily) -> Result<Vec<Block>> {
    (1..=mesh.degree())
        .map(|k| family.exp_block(mesh.node(k), mesh.step(k)))
        .collect()
}

/// `h ↦ e^{-h A_k}` for a fixed frozen operator, reusing one factorization.
enum ExpKernel {
    Diagonal(DVector<f64>),
    Eigen {
        vectors: DMatrix<f64>,
        values: DVector<f64>,
    },
    General(DMatrix<f64>),
}

impl ExpKernel {
    fn new(a: &Block, method: DenseExp) -> Self {
        match (a, method) {
            (Block::Diagonal(d), _) => ExpKernel::Diagonal(d.clone()),
            (Block::Dense(m), DenseExp::SymmetricEigen) => {
                let eig = SymmetricEigen::new(m.clone());
                ExpKernel::Eigen {
                    vectors: eig.eigenvectors,
                    values: eig.eigenvalues,
                }
            }
            (Block::Dense(m), DenseExp::ScalingSquaring) => ExpKernel::General(m.clone()),
        }
    }

    fn at(&self, h: f64) -> Block {
        match self {
            ExpKernel::Diagonal(d) => Block::Diagonal(d.map(|l| (-h * l).exp())),
            ExpKernel::Eigen { vectors, values } => {
                let decay = values.map(|l| (-h * l).exp());
                Block::Dense(vectors * DMatrix::from_diagonal(&decay) * vectors.transpose())
            }
            ExpKernel::General(m) => Block::Dense((m * -h).exp()),
        }
    }
}

/// `α_{kj}` for `k = 1..=n`, `j = 0..=n`; `result[k - 1][j]`.
pub fn compute_alpha(
    mesh: &Mesh,
    family: &OperatorFamily,
    quad_order: usize,
    path: AlphaPath,
) -> Result<Vec<Vec<Block>>> {
    let n = mesh.degree();
    if quad_order < n + 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrature order {quad_order} is below n + 2 = {}",
            n + 2
        )));
    }
    let exact_ok = matches!(
        family,
        OperatorFamily::Diagonal(d) if d.polynomial_degree().is_some_and(|deg| deg <= MAX_EXACT_DEGREE)
    );
    match path {
        AlphaPath::Quadrature => alpha_by_quadrature(mesh, family, quad_order),
        AlphaPath::Auto if !exact_ok => alpha_by_quadrature(mesh, family, quad_order),
        AlphaPath::Auto | AlphaPath::ExactMoments => alpha_by_moments(mesh, family),
        AlphaPath::Both { tol } => {
            let quad = alpha_by_quadrature(mesh, family, quad_order)?;
            let exact = alpha_by_moments(mesh, family)?;
            let mut worst: f64 = 0.0;
            for (rq, re) in quad.iter().zip(&exact) {
                for (bq, be) in rq.iter().zip(re) {
                    let mut d = bq.clone();
                    d.add_scaled(-1.0, be);
                    worst = worst.max(d.max_abs());
                }
            }
            if worst > tol {
                return Err(Error::QuadratureMismatch(worst));
            }
            Ok(exact)
        }
    }
}

fn alpha_by_quadrature(
    mesh: &Mesh,
    family: &OperatorFamily,
    quad_order: usize,
) -> Result<Vec<Vec<Block>>> {
    let n = mesh.degree();
    let rule = GaussLegendre::new(quad_order);
    let method = family.dense_exp_method();
    let mut basis = vec![0.0; n + 1];
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let (a, b) = (mesh.node(k - 1), mesh.node(k));
        let frozen = family.eval(b)?;
        let kernel = ExpKernel::new(&frozen, method);
        let mut row = vec![frozen.zeros_like(); n + 1];
        for (s, w) in rule.mapped(a, b) {
            let mut diff = frozen.clone();
            diff.add_scaled(-1.0, &family.eval(s)?);
            let integrand = kernel.at(b - s).compose(&diff);
            mesh.lagrange_basis_into(s, &mut basis);
            for (entry, l) in row.iter_mut().zip(&basis) {
                entry.add_scaled(w * l, &integrand);
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn alpha_by_moments(mesh: &Mesh, family: &OperatorFamily) -> Result<Vec<Vec<Block>>> {
    let OperatorFamily::Diagonal(diag) = family else {
        return Err(Error::InvalidArgument(
            "exact moment path requires a diagonal family".into(),
        ));
    };
    let degree = match diag.polynomial_degree() {
        Some(d) if d <= MAX_EXACT_DEGREE => d,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "exact moment path requires eigenvalues declared polynomial of degree <= {MAX_EXACT_DEGREE}"
            )))
        }
    };
    let n = mesh.degree();
    let modes = diag.modes();
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let tk = mesh.node(k);
        let tau = mesh.step(k);
        let basis_polys: Vec<Vec<f64>> = (0..=n).map(|j| lagrange_in_offset(mesh, j, tk)).collect();
        let mut row = vec![DVector::zeros(modes); n + 1];
        for m in 1..=modes {
            let lam_k = diag.eigenvalue(m, tk);
            if !lam_k.is_finite() || lam_k < 0.0 {
                return Err(Error::PositivityViolation {
                    value: lam_k,
                    t: tk,
                });
            }
            let gap = eigenvalue_gap_poly(|t| diag.eigenvalue(m, t), tk, tau, degree)?;
            let mu = exp_moments(lam_k, tau, n + degree)?.mu;
            for (j, lj) in basis_polys.iter().enumerate() {
                let mut acc = 0.0;
                for (p, gp) in gap.iter().enumerate() {
                    for (q, lq) in lj.iter().enumerate() {
                        acc += gp * lq * mu[p + q];
                    }
                }
                row[j][m - 1] = acc;
            }
        }
        out.push(row.into_iter().map(Block::Diagonal).collect());
    }
    Ok(out)
}

/// Monomial coefficients in `u = t_k - s` of `L_{j,n}(t_k - u)`.
fn lagrange_in_offset(mesh: &Mesh, j: usize, tk: f64) -> Vec<f64> {
    let nodes = mesh.nodes();
    let tj = nodes[j];
    let mut poly = vec![1.0];
    for (i, &ti) in nodes.iter().enumerate() {
        if i == j {
            continue;
        }
        // ((t_k - t_i) - u) / (t_j - t_i)
        let scale = 1.0 / (tj - ti);
        let c0 = (tk - ti) * scale;
        let c1 = -scale;
        let mut next = vec![0.0; poly.len() + 1];
        for (p, &c) in poly.iter().enumerate() {
            next[p] += c * c0;
            next[p + 1] += c * c1;
        }
        poly = next;
    }
    poly
}

/// Monomial coefficients in `u` of `λ(t_k) - λ(t_k - u)`, fitted at
/// `degree + 1` Chebyshev points of `[0, τ]` (exact for polynomial `λ`).
fn eigenvalue_gap_poly(
    lambda: impl Fn(f64) -> f64,
    tk: f64,
    tau: f64,
    degree: usize,
) -> Result<Vec<f64>> {
    let lam_k = lambda(tk);
    if degree == 0 {
        return Ok(vec![0.0]);
    }
    let npts = degree + 1;
    // Fit in w = u/τ ∈ [0, 1] to keep the Vandermonde matrix well scaled.
    let ws: Vec<f64> = (0..npts)
        .map(|i| {
            0.5 * (1.0 - ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * npts) as f64).cos())
        })
        .collect();
    let vander = DMatrix::from_fn(npts, npts, |r, c| ws[r].powi(c as i32));
    let rhs = DVector::from_iterator(npts, ws.iter().map(|w| lam_k - lambda(tk - w * tau)));
    if rhs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("eigenvalue near t = {tk}")));
    }
    let coeffs = vander.lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(p, c)| c / tau.powi(p as i32))
        .collect())
}

/// `φ_k` for `k = 1..=n`, plus a warning when a doubled-order evaluation
/// differs by more than `1e-11` relative to the largest `‖φ_k‖`.
pub fn compute_phi(
    mesh: &Mesh,
    family: &OperatorFamily,
    forcing: &dyn Fn(f64) -> State,
    quad_order: usize,
) -> Result<(Vec<State>, Option<String>)> {
    let n = mesh.degree();
    if quad_order < n + 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrature order {quad_order} is below n + 2 = {}",
            n + 2
        )));
    }
    let base = phi_with_rule(mesh, family, forcing, &GaussLegendre::new(quad_order))?;
    let fine = phi_with_rule(mesh, family, forcing, &GaussLegendre::new(2 * quad_order))?;
    let scale = crate::max_block_norm(&fine);
    let diff = base
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    let warning = (diff > 1e-11 * scale).then(|| {
        format!(
            "forcing integrals changed by {:.3e} (relative) when the quadrature order was doubled from {quad_order}",
            diff / scale
        )
    });
    Ok((base, warning))
}

fn phi_with_rule(
    mesh: &Mesh,
    family: &OperatorFamily,
    forcing: &dyn Fn(f64) -> State,
    rule: &GaussLegendre,
) -> Result<Vec<State>> {
    let dim = family.dim();
    let method = family.dense_exp_method();
    (1..=mesh.degree())
        .map(|k| {
            let (a, b) = (mesh.node(k - 1), mesh.node(k));
            let kernel = ExpKernel::new(&family.eval(b)?, method);
            let mut acc = State::zeros(dim);
            for (s, w) in rule.mapped(a, b) {
                let f = forcing(s);
                if f.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: f.len(),
                    });
                }
                if f.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("forcing at t = {s}")));
                }
                let mut term = State::zeros(dim);
                kernel.at(b - s).apply_add(&f, &mut term);
                acc.axpy(w, &term, 1.0);
            }
            Ok(acc)
        })
        .collect()
}
