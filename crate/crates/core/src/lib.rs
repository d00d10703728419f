//! Exponentially convergent discretization of the two-point nonlocal problem
//!
//! ```text
//! dv/dt + A(t) v = f(t),   t in (-1, 1),
//! v(-1) + alpha v(1) = phi,
//! ```
//!
//! for strongly positive, time-dependent operator families `A(t)`.
//!
//! The operator is frozen at the Chebyshev–Gauss–Lobatto nodes, the remainder
//! `[A_k - A(s)] v(s)` is replaced by its interpolation polynomial, and the
//! resulting block system for the nodal values is solved either by a
//! fixed-point iteration built around the explicit inverse of its
//! block-bidiagonal part or by direct elimination.
//!
//! # Module map
//!
//! - [`mesh`]: CGL nodes, barycentric Lagrange basis, Lebesgue diagnostics.
//! - [`operator`]: diagonal and dense operator families, `e^{-sA(t)}`, `ω`.
//! - [`quadrature`]: Gauss–Legendre rules.
//! - [`coefficients`]: `σ_k`, `α_{kj}`, `φ_k` and exponential moments.
//! - [`solver`]: system assembly, `S^{-1}`, fixed-point and direct solves.
//! - [`oracles`]: closed-form heat solution and integrating-factor references.
//! - [`expr`], [`config`], [`harness`]: configuration language and CSV runs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coefficients;
pub mod config;
mod error;
pub mod expr;
pub mod harness;
pub mod mesh;
pub mod operator;
pub mod oracles;
pub mod quadrature;
pub mod solver;

pub use coefficients::{
    compute_alpha, compute_phi, compute_sigma, exp_moments, AlphaPath, Block, CoefficientSet,
    ExpMoments,
};
pub use error::{Error, Result};
pub use mesh::{cgl_mesh, Mesh};
pub use operator::{
    transform_unit_interval, DenseFamily, DiagonalFamily, NonlocalProblem, OperatorFamily,
    OperatorValue,
};
pub use oracles::{exact_heat_solution, mode_ivp_oracle, nonlocal_oracle, OracleResult};
pub use solver::{
    assemble, direct_solve, fixed_point_solve, solve_nonlocal, DiscreteSystem, Method, SolveReport,
};

/// A state vector: one coefficient per mode (diagonal families) or one
/// component per dimension (dense families).
pub type State = nalgebra::DVector<f64>;

/// Max-block norm `max_k ‖v_k‖_∞` over a list of state vectors.
pub fn max_block_norm(blocks: &[State]) -> f64 {
    blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
}
