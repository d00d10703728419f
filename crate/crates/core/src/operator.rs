//! Strongly positive operator families `A(t)` on `[-1, 1]`.
//!
//! Two finite-dimensional realizations are provided. A [`DiagonalFamily`]
//! stores the operator in its eigenbasis, one eigenvalue function per mode;
//! this is the spectral picture of the heat example, where mode `m` is the
//! coefficient of `sin(mπx)`. A [`DenseFamily`] stores a matrix-valued
//! `A(t)` and covers non-commuting cases.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, State};

pub type EigenvalueFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64) -> State + Send + Sync>;

/// Default number of uniform time samples used to estimate `ω`.
pub const DEFAULT_OMEGA_SAMPLES: usize = 256;

/// How a dense exponential is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseExp {
    /// `V diag(e^{-sλ}) Vᵀ` from a symmetric eigendecomposition.
    SymmetricEigen,
    /// Scaling and squaring with a Padé kernel.
    ScalingSquaring,
}

/// An operator block: either diagonal in the mode basis or a dense matrix.
///
/// Used both for frozen operators `A(t_k)` and for the coefficient blocks
/// `σ_k`, `α_{kj}` built from them.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// The frozen operator `A(t)` at one instant.
pub type OperatorValue = Block;

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Diagonal(d) => d.len(),
            Block::Dense(m) => m.nrows(),
        }
    }

    pub fn zeros_like(&self) -> Block {
        match self {
            Block::Diagonal(d) => Block::Diagonal(DVector::zeros(d.len())),
            Block::Dense(m) => Block::Dense(DMatrix::zeros(m.nrows(), m.ncols())),
        }
    }

    pub fn identity_like(&self) -> Block {
        match self {
            Block::Diagonal(d) => Block::Diagonal(DVector::from_element(d.len(), 1.0)),
            Block::Dense(m) => Block::Dense(DMatrix::identity(m.nrows(), m.ncols())),
        }
    }

    pub fn apply(&self, v: &State) -> State {
        match self {
            Block::Diagonal(d) => d.component_mul(v),
            Block::Dense(m) => m * v,
        }
    }

    /// `y += self * v`.
    pub fn apply_add(&self, v: &State, y: &mut State) {
        match self {
            Block::Diagonal(d) => y.zip_zip_apply(d, v, |yi, di, vi| *yi += di * vi),
            Block::Dense(m) => y.gemv(1.0, m, v, 1.0),
        }
    }

    /// The product `self · rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &Block) -> Block {
        match (self, rhs) {
            (Block::Diagonal(a), Block::Diagonal(b)) => Block::Diagonal(a.component_mul(b)),
            (Block::Dense(a), Block::Dense(b)) => Block::Dense(a * b),
            (Block::Diagonal(a), Block::Dense(b)) => Block::Dense(DMatrix::from_diagonal(a) * b),
            (Block::Dense(a), Block::Diagonal(b)) => Block::Dense(a * DMatrix::from_diagonal(b)),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &Block) {
        match (self, other) {
            (Block::Diagonal(a), Block::Diagonal(b)) => a.axpy(scale, b, 1.0),
            (Block::Dense(a), Block::Dense(b)) => *a += b * scale,
            (Block::Dense(a), Block::Diagonal(b)) => {
                for (i, bi) in b.iter().enumerate() {
                    a[(i, i)] += scale * bi;
                }
            }
            (s @ Block::Diagonal(_), Block::Dense(b)) => {
                let Block::Diagonal(a) = &*s else {
                    unreachable!()
                };
                let mut m = DMatrix::from_diagonal(a);
                m += b * scale;
                *s = Block::Dense(m);
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Block::Diagonal(d) => DMatrix::from_diagonal(d),
            Block::Dense(m) => m.clone(),
        }
    }

    /// Spectral (2-)norm.
    pub fn norm(&self) -> f64 {
        match self {
            Block::Diagonal(d) => d.amax(),
            Block::Dense(m) => m.clone().singular_values().max(),
        }
    }

    /// Largest absolute entry; a cheap size measure for diagnostics.
    pub fn max_abs(&self) -> f64 {
        match self {
            Block::Diagonal(d) => d.amax(),
            Block::Dense(m) => m.amax(),
        }
    }

    /// `e^{-s·self}`, treating the block as an operator value.
    pub fn exp_neg(&self, s: f64, method: DenseExp) -> Result<Block> {
        if s < 0.0 {
            return Err(Error::NegativeTime(s));
        }
        Ok(match self {
            Block::Diagonal(d) => Block::Diagonal(d.map(|l| (-s * l).exp())),
            Block::Dense(m) => Block::Dense(match method {
                DenseExp::SymmetricEigen => {
                    let eig = SymmetricEigen::new(m.clone());
                    let decay = eig.eigenvalues.map(|l| (-s * l).exp());
                    &eig.eigenvectors
                        * DMatrix::from_diagonal(&decay)
                        * eig.eigenvectors.transpose()
                }
                DenseExp::ScalingSquaring => (m * -s).exp(),
            }),
        })
    }
}

/// `A(t)` given by its eigenvalues `λ(m, t)`, `m = 1..=M`.
#[derive(Clone)]
pub struct DiagonalFamily {
    modes: usize,
    eigenvalue: EigenvalueFn,
    polynomial_degree: Option<usize>,
    omega: Arc<OnceLock<f64>>,
}

impl fmt::Debug for DiagonalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiagonalFamily")
            .field("modes", &self.modes)
            .field("polynomial_degree", &self.polynomial_degree)
            .field("omega", &self.omega.get())
            .finish()
    }
}

impl DiagonalFamily {
    pub fn new<F>(modes: usize, eigenvalue: F) -> Self
    where
        F: Fn(usize, f64) -> f64 + Send + Sync + 'static,
    {
        assert!(modes >= 1, "a diagonal family needs at least one mode");
        Self {
            modes,
            eigenvalue: Arc::new(eigenvalue),
            polynomial_degree: None,
            omega: Arc::new(OnceLock::new()),
        }
    }

    /// Time-independent eigenvalues.
    pub fn constant(values: Vec<f64>) -> Self {
        let modes = values.len();
        Self::new(modes, move |m, _| values[m - 1]).with_polynomial_degree(0)
    }

    /// `-∂²/∂x² + (1 + t)` with Dirichlet conditions on `(0, 1)`:
    /// `λ(m, t) = m²π² + 1 + t`.
    pub fn heat(modes: usize) -> Self {
        Self::new(modes, |m, t| {
            let mf = m as f64;
            mf * mf * PI * PI + 1.0 + t
        })
        .with_polynomial_degree(1)
    }

    /// Declares every `λ(m, ·)` to be a polynomial of degree at most
    /// `degree`, enabling the exact moment path for `α_{kj}`.
    pub fn with_polynomial_degree(mut self, degree: usize) -> Self {
        self.polynomial_degree = Some(degree);
        self
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn polynomial_degree(&self) -> Option<usize> {
        self.polynomial_degree
    }

    /// `λ(m, t)` for `m` in `1..=M`.
    pub fn eigenvalue(&self, m: usize, t: f64) -> f64 {
        (self.eigenvalue)(m, t)
    }

    pub fn eigenvalues(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.modes, (1..=self.modes).map(|m| self.eigenvalue(m, t)))
    }
}

/// Matrix-valued `A(t)` of fixed dimension.
#[derive(Clone)]
pub struct DenseFamily {
    dim: usize,
    matrix: MatrixFn,
    symmetric: bool,
    omega: Arc<OnceLock<f64>>,
}

impl fmt::Debug for DenseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseFamily")
            .field("dim", &self.dim)
            .field("symmetric", &self.symmetric)
            .field("omega", &self.omega.get())
            .finish()
    }
}

impl DenseFamily {
    pub fn new<F>(dim: usize, symmetric: bool, matrix: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(dim >= 1, "a dense family needs dimension >= 1");
        Self {
            dim,
            matrix: Arc::new(matrix),
            symmetric,
            omega: Arc::new(OnceLock::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        (self.matrix)(t)
    }

    fn exp_method(&self) -> DenseExp {
        if self.symmetric {
            DenseExp::SymmetricEigen
        } else {
            DenseExp::ScalingSquaring
        }
    }
}

#[derive(Debug, Clone)]
pub enum OperatorFamily {
    Diagonal(DiagonalFamily),
    Dense(DenseFamily),
}

impl From<DiagonalFamily> for OperatorFamily {
    fn from(f: DiagonalFamily) -> Self {
        OperatorFamily::Diagonal(f)
    }
}

impl From<DenseFamily> for OperatorFamily {
    fn from(f: DenseFamily) -> Self {
        OperatorFamily::Dense(f)
    }
}

impl OperatorFamily {
    /// Length of a state vector.
    pub fn dim(&self) -> usize {
        match self {
            OperatorFamily::Diagonal(f) => f.modes,
            OperatorFamily::Dense(f) => f.dim,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, OperatorFamily::Diagonal(_))
    }

    pub fn dense_exp_method(&self) -> DenseExp {
        match self {
            OperatorFamily::Diagonal(_) => DenseExp::SymmetricEigen,
            OperatorFamily::Dense(f) => f.exp_method(),
        }
    }

    /// The frozen operator `A(t)`.
    pub fn eval(&self, t: f64) -> Result<OperatorValue> {
        let value = match self {
            OperatorFamily::Diagonal(f) => Block::Diagonal(f.eigenvalues(t)),
            OperatorFamily::Dense(f) => {
                let m = f.matrix(t);
                if m.nrows() != f.dim || m.ncols() != f.dim {
                    return Err(Error::DimensionMismatch {
                        expected: f.dim,
                        found: m.nrows().max(m.ncols()),
                    });
                }
                Block::Dense(m)
            }
        };
        let finite = match &value {
            Block::Diagonal(d) => d.iter().all(|x| x.is_finite()),
            Block::Dense(m) => m.iter().all(|x| x.is_finite()),
        };
        if !finite {
            return Err(Error::NonFinite(format!("operator evaluation at t = {t}")));
        }
        Ok(value)
    }

    /// `e^{-s A(t)}` as a block.
    pub fn exp_block(&self, t: f64, s: f64) -> Result<Block> {
        if s < 0.0 {
            return Err(Error::NegativeTime(s));
        }
        self.eval(t)?.exp_neg(s, self.dense_exp_method())
    }

    /// `e^{-s A(t_eval)} v`.
    pub fn exp_action(&self, t_eval: f64, s: f64, v: &State) -> Result<State> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(self.exp_block(t_eval, s)?.apply(v))
    }

    /// Smallest eigenvalue (symmetric part, for dense families) over
    /// `t_samples` uniform times in `[-1, 1]`. The first computed value is
    /// cached on the family.
    ///
    /// This is a sampled estimate of the decay rate `ω` in
    /// `‖e^{-sA(t)}‖ <= e^{-ωs}`, exact when the minimum is attained at a
    /// sample (e.g. eigenvalues monotone in `t`).
    pub fn omega_lower_bound(&self, t_samples: usize) -> Result<f64> {
        if t_samples < 16 {
            return Err(Error::InvalidArgument(format!(
                "omega estimation needs at least 16 samples, got {t_samples}"
            )));
        }
        let cache = match self {
            OperatorFamily::Diagonal(f) => &f.omega,
            OperatorFamily::Dense(f) => &f.omega,
        };
        if let Some(&w) = cache.get() {
            return Ok(w);
        }
        let mut best = f64::INFINITY;
        let mut at = -1.0;
        for i in 0..t_samples {
            let t = -1.0 + 2.0 * i as f64 / (t_samples - 1) as f64;
            let low = match self.eval(t)? {
                Block::Diagonal(d) => d.min(),
                Block::Dense(m) => {
                    let sym = (&m + m.transpose()) * 0.5;
                    SymmetricEigen::new(sym).eigenvalues.min()
                }
            };
            if low < best {
                best = low;
                at = t;
            }
        }
        if best <= 0.0 || !best.is_finite() {
            return Err(Error::PositivityViolation { value: best, t: at });
        }
        Ok(*cache.get_or_init(|| best))
    }

    /// `ω` with the default sampling density.
    pub fn omega(&self) -> Result<f64> {
        self.omega_lower_bound(DEFAULT_OMEGA_SAMPLES)
    }
}

/// The nonlocal problem `v' + A(t)v = f(t)`, `v(-1) + αv(1) = φ` on `[-1, 1]`.
#[derive(Clone)]
pub struct NonlocalProblem {
    pub family: OperatorFamily,
    pub forcing: VectorFn,
    pub alpha: f64,
    pub phi: State,
    pub exact: Option<VectorFn>,
    /// Whether the forcing is smooth enough for Gauss–Legendre accuracy.
    /// Merely continuous forcing is accepted but flagged in solve reports.
    pub smooth_forcing: bool,
}

impl fmt::Debug for NonlocalProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlocalProblem")
            .field("family", &self.family)
            .field("alpha", &self.alpha)
            .field("phi", &self.phi)
            .field("has_exact", &self.exact.is_some())
            .field("smooth_forcing", &self.smooth_forcing)
            .finish()
    }
}

impl NonlocalProblem {
    pub fn new<F>(
        family: impl Into<OperatorFamily>,
        forcing: F,
        alpha: f64,
        phi: State,
    ) -> Result<Self>
    where
        F: Fn(f64) -> State + Send + Sync + 'static,
    {
        let family = family.into();
        let dim = family.dim();
        if phi.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: phi.len(),
            });
        }
        let f0 = forcing(0.0);
        if f0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f0.len(),
            });
        }
        if !alpha.is_finite() {
            return Err(Error::NonFinite("nonlocal weight alpha".into()));
        }
        Ok(Self {
            family,
            forcing: Arc::new(forcing),
            alpha,
            phi,
            exact: None,
            smooth_forcing: true,
        })
    }

    pub fn with_exact<F>(mut self, exact: F) -> Self
    where
        F: Fn(f64) -> State + Send + Sync + 'static,
    {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_smooth_forcing(mut self, smooth: bool) -> Self {
        self.smooth_forcing = smooth;
        self
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn forcing(&self, t: f64) -> State {
        (self.forcing)(t)
    }

    /// The heat example in its sine eigenbasis (mode 1 only):
    /// `λ = π² + 1 + t`, `f = e^{-π²(1+t)}(1+t)`, `α = 1/2`,
    /// `φ = 1 + e^{-2π²}/2`, exact solution `e^{-π²(1+t)}`.
    pub fn heat_example() -> Self {
        let pi2 = PI * PI;
        let phi = State::from_element(1, 1.0 + 0.5 * (-2.0 * pi2).exp());
        Self::new(
            DiagonalFamily::heat(1),
            move |t| State::from_element(1, (-pi2 * (1.0 + t)).exp() * (1.0 + t)),
            0.5,
            phi,
        )
        .expect("heat example dimensions agree")
        .with_exact(move |t| State::from_element(1, (-pi2 * (1.0 + t)).exp()))
    }

    /// `1 - |α| e^{-2ω}`. Positive means `I + αU(1, -1)` is invertible by the
    /// Neumann-series bound; a nonpositive value is inconclusive.
    pub fn wellposedness_margin(&self) -> Result<f64> {
        let omega = self.family.omega()?;
        Ok(1.0 - self.alpha.abs() * (-2.0 * omega).exp())
    }
}

/// Maps a problem posed on `t' ∈ [0, 1]` onto `[-1, 1]` via `t' = (1+t)/2`:
/// `A(t) = A₁((1+t)/2)/2`, `f(t) = f₁((1+t)/2)/2`, nonlocal data unchanged.
///
/// The solution `v` of the mapped problem gives `u(t') = v(2t' - 1)`; see
/// [`pullback_time`].
pub fn transform_unit_interval<F>(
    a1: impl Into<OperatorFamily>,
    f1: F,
    alpha: f64,
    phi: State,
) -> Result<NonlocalProblem>
where
    F: Fn(f64) -> State + Send + Sync + 'static,
{
    let to_unit = |t: f64| 0.5 * (1.0 + t);
    let family = match a1.into() {
        OperatorFamily::Diagonal(d) => {
            let degree = d.polynomial_degree;
            let eig = d.eigenvalue.clone();
            let mut mapped = DiagonalFamily::new(d.modes, move |m, t| 0.5 * eig(m, to_unit(t)));
            mapped.polynomial_degree = degree;
            OperatorFamily::Diagonal(mapped)
        }
        OperatorFamily::Dense(d) => {
            let mat = d.matrix.clone();
            OperatorFamily::Dense(DenseFamily::new(d.dim, d.symmetric, move |t| {
                mat(to_unit(t)) * 0.5
            }))
        }
    };
    NonlocalProblem::new(family, move |t| f1(to_unit(t)) * 0.5, alpha, phi)
}

/// Time on `[-1, 1]` corresponding to `t'` on `[0, 1]`.
pub fn pullback_time(t_unit: f64) -> f64 {
    2.0 * t_unit - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize, shift: f64) -> DMatrix<f64> {
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(d, d) * shift
    }

    fn dense_family(rng: &mut ChaCha8Rng, d: usize) -> DenseFamily {
        let a0 = random_spd(rng, d, 0.5);
        let a1 = random_spd(rng, d, 0.0) * 0.2;
        DenseFamily::new(d, true, move |t| &a0 + &a1 * (0.5 * (1.0 + t)))
    }

    #[test]
    fn heat_eigenvalue_at_zero() {
        let fam = OperatorFamily::from(DiagonalFamily::heat(3));
        let Block::Diagonal(d) = fam.eval(0.0).unwrap() else {
            panic!()
        };
        assert_abs_diff_eq!(d[0], PI * PI + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[0], 10.869604, epsilon = 5e-7);
        assert_abs_diff_eq!(d[2], 9.0 * PI * PI + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_families_are_time_independent() {
        let fam = OperatorFamily::from(DiagonalFamily::constant(vec![2.0]));
        assert_eq!(
            fam.eval(-0.7).unwrap(),
            Block::Diagonal(DVector::from_element(1, 2.0))
        );
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let mm = m.clone();
        let fam = OperatorFamily::from(DenseFamily::new(2, true, move |_| mm.clone()));
        assert_eq!(fam.eval(-1.0).unwrap(), Block::Dense(m.clone()));
        assert_eq!(fam.eval(1.0).unwrap(), Block::Dense(m));
    }

    #[test]
    fn non_finite_matrix_is_rejected() {
        let fam = OperatorFamily::from(DenseFamily::new(1, true, |t| {
            DMatrix::from_element(1, 1, 1.0 / t)
        }));
        assert!(matches!(fam.eval(0.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn exp_action_examples() {
        let fam = OperatorFamily::from(DiagonalFamily::constant(vec![2.0]));
        let v = State::from_element(1, 1.0);
        assert_eq!(fam.exp_action(0.0, 0.0, &v).unwrap(), v);
        assert_abs_diff_eq!(
            fam.exp_action(0.0, 0.5, &v).unwrap()[0],
            0.36787944,
            epsilon = 1e-8
        );
        assert_eq!(
            fam.exp_action(0.0, -0.1, &v),
            Err(Error::NegativeTime(-0.1))
        );

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        for sym in [true, false] {
            let mm = m.clone();
            let fam = OperatorFamily::from(DenseFamily::new(2, sym, move |_| mm.clone()));
            let w = fam
                .exp_action(0.3, 1.0, &State::from_vec(vec![1.0, 1.0]))
                .unwrap();
            assert_abs_diff_eq!(w[0], (-1.0f64).exp(), epsilon = 1e-14);
            assert_abs_diff_eq!(w[1], (-3.0f64).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn omega_examples() {
        let heat = OperatorFamily::from(DiagonalFamily::heat(4));
        assert_abs_diff_eq!(
            heat.omega_lower_bound(256).unwrap(),
            PI * PI,
            epsilon = 1e-12
        );
        let c = OperatorFamily::from(DiagonalFamily::constant(vec![2.0, 5.0]));
        assert_eq!(c.omega().unwrap(), 2.0);
        let bad = OperatorFamily::from(DiagonalFamily::new(1, |_, t| t));
        assert!(matches!(
            bad.omega(),
            Err(Error::PositivityViolation { .. })
        ));
        assert!(heat.omega_lower_bound(8).is_err());
    }

    #[test]
    fn wellposedness_margins() {
        let fam = DiagonalFamily::constant(vec![1.0]);
        let p = NonlocalProblem::new(fam, |_| State::zeros(1), 0.0, State::zeros(1)).unwrap();
        assert_eq!(p.wellposedness_margin().unwrap(), 1.0);

        let heat = NonlocalProblem::heat_example();
        let m = heat.wellposedness_margin().unwrap();
        assert_abs_diff_eq!(1.0 - m, 0.5 * (-2.0 * PI * PI).exp(), epsilon = 2e-16);
        assert_abs_diff_eq!(1.0 - m, 1.34e-9, epsilon = 1e-11);

        let tiny = DiagonalFamily::constant(vec![1e-12]);
        let p = NonlocalProblem::new(tiny, |_| State::zeros(1), -1.0, State::zeros(1)).unwrap();
        assert!(p.wellposedness_margin().unwrap().abs() < 1e-11);
    }

    #[test]
    fn problem_dimension_checks() {
        let fam = DiagonalFamily::constant(vec![1.0, 2.0]);
        assert!(
            NonlocalProblem::new(fam.clone(), |_| State::zeros(2), 0.5, State::zeros(3)).is_err()
        );
        assert!(NonlocalProblem::new(fam, |_| State::zeros(1), 0.5, State::zeros(2)).is_err());
    }

    #[test]
    fn unit_interval_transform() {
        let a1 = DiagonalFamily::constant(vec![3.0]);
        let p = transform_unit_interval(a1, |_| State::from_element(1, 1.0), 0.25, State::zeros(1))
            .unwrap();
        for t in [-1.0, 0.0, 0.4, 1.0] {
            assert_eq!(
                p.family.eval(t).unwrap(),
                Block::Diagonal(DVector::from_element(1, 1.5))
            );
            assert_eq!(p.forcing(t)[0], 0.5);
        }
        assert_eq!(p.alpha, 0.25);
        assert_eq!(pullback_time(1.0), 1.0);
        assert_eq!(pullback_time(0.0), -1.0);
    }

    #[test]
    fn dense_paths_agree_on_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = Block::Dense(random_spd(&mut rng, 5, 0.1));
            let s = rng.random_range(0.0..2.0);
            let e1 = a.exp_neg(s, DenseExp::SymmetricEigen).unwrap();
            let e2 = a.exp_neg(s, DenseExp::ScalingSquaring).unwrap();
            let diff = (e1.to_dense() - e2.to_dense()).amax();
            assert!(diff <= 1e-11, "paths differ by {diff}");
        }
    }

    #[test]
    fn semigroup_property_both_realizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let diag = OperatorFamily::from(DiagonalFamily::heat(3));
        let dense = OperatorFamily::from(dense_family(&mut rng, 4));
        for fam in [diag, dense] {
            for _ in 0..20 {
                let d = fam.dim();
                let v = State::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let t = rng.random_range(-1.0..1.0);
                let (s1, s2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
                let a = fam
                    .exp_action(t, s1, &fam.exp_action(t, s2, &v).unwrap())
                    .unwrap();
                let b = fam.exp_action(t, s1 + s2, &v).unwrap();
                assert!((a - b).amax() <= 1e-10);
            }
        }
    }

    #[test]
    fn decay_bound_both_realizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let diag = OperatorFamily::from(DiagonalFamily::heat(3));
        let dense = OperatorFamily::from(dense_family(&mut rng, 4));
        for fam in [diag, dense] {
            let omega = fam.omega().unwrap();
            for _ in 0..50 {
                let v = State::from_fn(fam.dim(), |_, _| rng.random_range(-1.0..1.0));
                let t = rng.random_range(-1.0..1.0);
                let s = rng.random_range(0.0..2.0);
                let w = fam.exp_action(t, s, &v).unwrap();
                assert!(w.norm() <= (-omega * s).exp() * v.norm() * (1.0 + 1e-10));
            }
        }
    }
}
