//! Reference solutions, independent of the collocation scheme.
//!
//! The per-mode oracle integrates `v' + λ(t)v = f(t)` with the integrating
//! factor `e^{∫λ}`, using composite Gauss–Legendre quadrature for both the
//! exponent and the Duhamel integral. The nonlocal oracle resolves the
//! two-point condition through the evolution-operator representation
//! `v(-1) = [1 + αU(1,-1)]^{-1} [φ - α ∫ U(1,s) f(s) ds]`.

use std::f64::consts::PI;

use crate::operator::{NonlocalProblem, OperatorFamily};
use crate::quadrature::GaussLegendre;
use crate::{Error, Result, State};

pub const DEFAULT_PANELS: usize = 512;
const PANEL_ORDER: usize = 10;
const RESOLUTION_TOL: f64 = 1e-9;

/// `u(x, t) = e^{-π²(1+t)} sin(πx)`.
pub fn exact_heat_solution(x: f64, t: f64) -> f64 {
    (-PI * PI * (1.0 + t)).exp() * (PI * x).sin()
}

/// Nodal values of a reference solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub times: Vec<f64>,
    pub values: Vec<State>,
    /// Largest change seen when the panel count was doubled.
    pub estimated_accuracy: f64,
}

/// `v(t1)` for `v' + λ(t)v = f(t)`, `v(t0) = v0`, with `panels` panels and a
/// doubled-panel check. Fails if the two resolutions differ by more than
/// `1e-9 · max(1, |v|)`.
pub fn mode_ivp_oracle(
    lambda: &dyn Fn(f64) -> f64,
    forcing: &dyn Fn(f64) -> f64,
    v0: f64,
    t0: f64,
    t1: f64,
    panels: usize,
) -> Result<f64> {
    mode_ivp_with_accuracy(lambda, forcing, v0, t0, t1, panels).map(|(v, _)| v)
}

/// As [`mode_ivp_oracle`], also returning the doubled-panel discrepancy.
pub fn mode_ivp_with_accuracy(
    lambda: &dyn Fn(f64) -> f64,
    forcing: &dyn Fn(f64) -> f64,
    v0: f64,
    t0: f64,
    t1: f64,
    panels: usize,
) -> Result<(f64, f64)> {
    if panels < 64 {
        return Err(Error::InvalidArgument(format!(
            "oracle needs >= 64 panels, got {panels}"
        )));
    }
    if !(t0 < t1) {
        return Err(Error::InvalidArgument(format!(
            "oracle interval [{t0}, {t1}] is empty"
        )));
    }
    let rule = GaussLegendre::new(PANEL_ORDER);
    let coarse = propagate(&rule, lambda, forcing, v0, t0, t1, panels);
    let fine = propagate(&rule, lambda, forcing, v0, t0, t1, 2 * panels);
    let diff = (coarse - fine).abs();
    if !fine.is_finite() {
        return Err(Error::NonFinite("integrating-factor oracle".into()));
    }
    if diff > RESOLUTION_TOL * fine.abs().max(1.0) {
        return Err(Error::OracleResolution(diff));
    }
    Ok((fine, diff))
}

fn propagate(
    rule: &GaussLegendre,
    lambda: &dyn Fn(f64) -> f64,
    forcing: &dyn Fn(f64) -> f64,
    v0: f64,
    t0: f64,
    t1: f64,
    panels: usize,
) -> f64 {
    let h = (t1 - t0) / panels as f64;
    let edge = |i: usize| if i == panels { t1 } else { t0 + h * i as f64 };
    // cumulative[i] = ∫_{t0}^{edge(i)} λ
    let mut cumulative = Vec::with_capacity(panels + 1);
    cumulative.push(0.0);
    for i in 0..panels {
        let step = rule.integrate(edge(i), edge(i + 1), lambda);
        cumulative.push(cumulative[i] + step);
    }
    let total = cumulative[panels];
    let mut duhamel = 0.0;
    for i in 0..panels {
        let a = edge(i);
        for (s, w) in rule.mapped(a, edge(i + 1)) {
            let partial = cumulative[i] + rule.integrate(a, s, lambda);
            duhamel += w * (-(total - partial)).exp() * forcing(s);
        }
    }
    (-total).exp() * v0 + duhamel
}

/// Reference solution of a diagonal nonlocal problem at `times`
/// (ascending, within `[-1, 1]`).
pub fn nonlocal_oracle(
    problem: &NonlocalProblem,
    times: &[f64],
    panels: usize,
) -> Result<OracleResult> {
    let OperatorFamily::Diagonal(family) = &problem.family else {
        return Err(Error::InvalidArgument(
            "nonlocal oracle requires a diagonal family".into(),
        ));
    };
    if times.windows(2).any(|w| w[0] > w[1]) || times.iter().any(|t| !(-1.0..=1.0).contains(t)) {
        return Err(Error::InvalidArgument(
            "oracle times must be ascending within [-1, 1]".into(),
        ));
    }
    let modes = family.modes();
    let mut values = vec![State::zeros(modes); times.len()];
    let mut accuracy: f64 = 0.0;
    for m in 1..=modes {
        let lambda = |t: f64| family.eigenvalue(m, t);
        let forcing = |t: f64| problem.forcing(t)[m - 1];
        let zero = |_: f64| 0.0;
        let (u, du) = mode_ivp_with_accuracy(&lambda, &zero, 1.0, -1.0, 1.0, panels)?;
        let (g, dg) = mode_ivp_with_accuracy(&lambda, &forcing, 0.0, -1.0, 1.0, panels)?;
        let corner = 1.0 + problem.alpha * u;
        if corner.abs() < 1e-12 {
            return Err(Error::SingularProblem {
                mode: m,
                value: corner.abs(),
            });
        }
        let mut v = (problem.phi[m - 1] - problem.alpha * g) / corner;
        accuracy = accuracy.max(du).max(dg);
        let mut t = -1.0;
        for (i, &ti) in times.iter().enumerate() {
            if ti > t {
                let (next, d) = mode_ivp_with_accuracy(&lambda, &forcing, v, t, ti, panels)?;
                v = next;
                t = ti;
                accuracy = accuracy.max(d);
            }
            values[i][m - 1] = v;
        }
    }
    Ok(OracleResult {
        times: times.to_vec(),
        values,
        estimated_accuracy: accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::operator::DiagonalFamily;
    use approx::assert_abs_diff_eq;

    #[test]
    fn heat_solution_values() {
        assert_abs_diff_eq!(exact_heat_solution(0.5, -1.0), 1.0, epsilon = 1e-15);
        let end = exact_heat_solution(0.5, 1.0);
        assert_abs_diff_eq!(end, (-2.0 * PI * PI).exp(), epsilon = 1e-22);
        assert_abs_diff_eq!(end, 2.6753e-9, epsilon = 1e-13);
        for x in [0.1, 0.5, 0.8] {
            let phi = (1.0 + 0.5 * (-2.0 * PI * PI).exp()) * (PI * x).sin();
            let r = exact_heat_solution(x, -1.0) + 0.5 * exact_heat_solution(x, 1.0) - phi;
            assert!(r.abs() < 1e-16);
        }
    }

    #[test]
    fn ivp_examples() {
        let zero = |_: f64| 0.0;
        let v = mode_ivp_oracle(&|_| 1.0, &zero, 1.0, -1.0, 1.0, 64).unwrap();
        assert_abs_diff_eq!(v, (-2.0f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 0.13533528, epsilon = 1e-8);
        let v = mode_ivp_oracle(&|t| 2.0 + t, &zero, 1.0, -1.0, 1.0, 64).unwrap();
        assert_abs_diff_eq!(v, (-4.0f64).exp(), epsilon = 1e-14);

        let pi2 = PI * PI;
        let lam = |t: f64| pi2 + 1.0 + t;
        let f = |s: f64| (-pi2 * (1.0 + s)).exp() * (1.0 + s);
        for t in [0.0, 1.0] {
            let v = mode_ivp_oracle(&lam, &f, 1.0, -1.0, t, DEFAULT_PANELS).unwrap();
            assert_abs_diff_eq!(v, exact_heat_solution(0.5, t), epsilon = 1e-10);
        }
    }

    #[test]
    fn ivp_argument_errors() {
        let zero = |_: f64| 0.0;
        assert!(mode_ivp_oracle(&|_| 1.0, &zero, 1.0, -1.0, 1.0, 63).is_err());
        assert!(mode_ivp_oracle(&|_| 1.0, &zero, 1.0, 1.0, 1.0, 64).is_err());
    }

    #[test]
    fn unresolved_oscillation_is_reported() {
        let f = |s: f64| (4000.0 * s).sin();
        let r = mode_ivp_oracle(&|_| 1.0, &f, 0.0, -1.0, 1.0, 64);
        assert!(matches!(r, Err(Error::OracleResolution(_))));
    }

    fn scalar(lambda: f64, alpha: f64, phi: f64) -> NonlocalProblem {
        NonlocalProblem::new(
            DiagonalFamily::constant(vec![lambda]),
            |_| State::zeros(1),
            alpha,
            State::from_element(1, phi),
        )
        .unwrap()
    }

    #[test]
    fn scalar_nonlocal_closed_form() {
        let r = nonlocal_oracle(&scalar(1.0, 0.5, 1.0), &[-1.0, 1.0], 64).unwrap();
        let v0 = 1.0 / (1.0 + 0.5 * (-2.0f64).exp());
        assert_abs_diff_eq!(r.values[0][0], v0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.values[1][0], v0 * (-2.0f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.values[0][0], 0.936621, epsilon = 5e-7);
        assert_abs_diff_eq!(r.values[1][0], 0.126758, epsilon = 5e-7);
    }

    #[test]
    fn zero_alpha_reduces_to_ivp() {
        let p = NonlocalProblem::new(
            DiagonalFamily::new(1, |_, t| 1.5 + 0.5 * t),
            |t| State::from_element(1, t.sin()),
            0.0,
            State::from_element(1, 2.0),
        )
        .unwrap();
        let r = nonlocal_oracle(&p, &[-1.0, 0.2, 1.0], 128).unwrap();
        let lam = |t: f64| 1.5 + 0.5 * t;
        let f = |t: f64| t.sin();
        let direct = mode_ivp_oracle(&lam, &f, 2.0, -1.0, 1.0, 128).unwrap();
        assert_eq!(r.values[0][0], 2.0);
        assert_abs_diff_eq!(r.values[2][0], direct, epsilon = 1e-13);
    }

    #[test]
    fn heat_oracle_matches_closed_form() {
        let mesh = Mesh::cgl(8).unwrap();
        let r = nonlocal_oracle(
            &NonlocalProblem::heat_example(),
            mesh.nodes(),
            DEFAULT_PANELS,
        )
        .unwrap();
        for (&t, v) in mesh.nodes().iter().zip(&r.values) {
            assert_abs_diff_eq!(v[0], exact_heat_solution(0.5, t), epsilon = 1e-9);
        }
        assert!(r.estimated_accuracy <= 1e-10);
    }

    fn smooth_problem(phi: State, with_forcing: bool) -> NonlocalProblem {
        NonlocalProblem::new(
            DiagonalFamily::new(2, |m, t| m as f64 * 2.0 + 0.5 * t + 0.2 * t * t),
            move |t| {
                if with_forcing {
                    State::from_vec(vec![(2.0 * t).cos(), 1.0 + t])
                } else {
                    State::zeros(2)
                }
            },
            -0.6,
            phi,
        )
        .unwrap()
    }

    #[test]
    fn oracle_satisfies_nonlocal_condition() {
        let p = smooth_problem(State::from_vec(vec![1.0, -0.5]), true);
        let r = nonlocal_oracle(&p, &[-1.0, 0.0, 1.0], DEFAULT_PANELS).unwrap();
        let defect = &r.values[0] + &r.values[2] * p.alpha - &p.phi;
        assert!(defect.amax() <= 1e-12);
    }

    #[test]
    fn oracle_is_stable_under_panel_doubling() {
        let p = smooth_problem(State::from_vec(vec![1.0, -0.5]), true);
        let times = Mesh::cgl(6).unwrap().nodes().to_vec();
        let a = nonlocal_oracle(&p, &times, 256).unwrap();
        let b = nonlocal_oracle(&p, &times, 512).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).amax() < 1e-10);
        }
    }

    #[test]
    fn oracle_superposition() {
        let times = [-1.0, -0.3, 0.4, 1.0];
        let phi1 = State::from_vec(vec![1.0, 2.0]);
        let phi2 = State::from_vec(vec![-0.5, 0.25]);
        let both = nonlocal_oracle(&smooth_problem(&phi1 + &phi2, true), &times, 128).unwrap();
        let first = nonlocal_oracle(&smooth_problem(phi1, true), &times, 128).unwrap();
        let second = nonlocal_oracle(&smooth_problem(phi2, false), &times, 128).unwrap();
        for i in 0..times.len() {
            assert!((&both.values[i] - &first.values[i] - &second.values[i]).amax() <= 1e-11);
        }
    }

    #[test]
    fn singular_problem_is_reported() {
        let lambda: f64 = 0.8;
        let p = scalar(lambda, -(2.0 * lambda).exp(), 1.0);
        assert!(matches!(
            nonlocal_oracle(&p, &[-1.0, 1.0], 64),
            Err(Error::SingularProblem { mode: 1, .. })
        ));
    }
}
